#include <doctest.h>

#include <cmath>

#include "tdanet/error.h"
#include "tdanet/gradcheck_suite.h"
#include "tdanet/layers.h"
#include "test_helpers.h"

using namespace tdanet;
using testing::as_vector;
using testing::constant;
using testing::from_rows;
using testing::random_tensor;

namespace {

void zero_param(ParamStore<double>& store, const std::string& name) { store.get(name).value.fill(0.0); }

}  // namespace

TEST_CASE("gln of a constant input is zero") {
  ParamLayout l;
  add_gln(l, "n", 3);
  ParamStore<double> store(l, 1);
  const auto y = gln(constant(Tensor<double>({3, 5}, 2.5)), store.bind_constant(), "n").value();
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("gln standardizes over channels and time jointly") {
  const auto x = random_tensor<double>({4, 50}, 2, 3.0);
  const auto y = gln(constant(x), constant(Tensor<double>({4, 1}, 1.0)), constant(Tensor<double>({4, 1}, 0.0))).value();
  double mean = 0.0, sq = 0.0;
  for (double v : y.values()) mean += v;
  mean /= static_cast<double>(y.size());
  for (double v : y.values()) sq += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(sq / static_cast<double>(y.size()) == doctest::Approx(1.0).epsilon(1e-6));
  // Per-channel affine.
  const auto g = from_rows<double>({{2}, {1}, {1}, {1}});
  const auto b = from_rows<double>({{0}, {0}, {0}, {5}});
  const auto z = gln(constant(x), constant(g), constant(b)).value();
  CHECK(z.at(0, 7) == doctest::Approx(2 * y.at(0, 7)));
  CHECK(z.at(3, 7) == doctest::Approx(y.at(3, 7) + 5));
}

TEST_CASE("prelu examples") {
  const auto x = constant(from_rows<double>({{-1, 0, 2}}));
  CHECK(as_vector(prelu(x, constant(from_rows<double>({{0.25}}))).value()) == std::vector<double>{-0.25, 0, 2});
  CHECK(as_vector(prelu(x, constant(from_rows<double>({{1.0}}))).value()) == std::vector<double>{-1, 0, 2});
  CHECK(as_vector(prelu(x, constant(from_rows<double>({{0.0}}))).value()) == std::vector<double>{0, 0, 2});
  ParamLayout l;
  add_prelu(l, "a");
  CHECK(ParamStore<double>(l, 0).get("a").value[0] == 0.25);
}

TEST_CASE("pointwise registers weight and optional bias") {
  ParamLayout l;
  add_pointwise(l, "p", 3, 5, true);
  add_pointwise(l, "q", 5, 2, false);
  ParamStore<float> store(l, 0);
  CHECK(store.get("p.weight").value.shape() == Shape{5, 3, 1});
  CHECK(store.get("p.bias").value.shape() == Shape{5, 1});
  CHECK_FALSE(store.contains("q.bias"));
  CHECK_THROWS_AS(store.get("missing"), ConfigError);
}

TEST_CASE("positional table values") {
  const auto d = positional_table<double>(8, 10);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(1, 0) == 1.0);
  CHECK(d.at(0, 1) == doctest::Approx(0.8414709848).epsilon(1e-9));
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 10; ++t) {
      const double a = d.at(2 * k, t), b = d.at(2 * k + 1, t);
      CHECK(a * a + b * b == doctest::Approx(1.0));
    }
  }
  CHECK(d.at(2, 3) == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 8))));
  CHECK_THROWS_AS(positional_table<double>(7, 4), ConfigError);
}

TEST_CASE("mhsa attention rows are stochastic") {
  ParamLayout l;
  add_mhsa(l, "m", 8);
  ParamStore<double> store(l, 3);
  AttentionOptions a;
  a.heads = 2;
  std::vector<Tensor<double>> attn;
  const auto y = mhsa(constant(random_tensor<double>({8, 6}, 4)), store.bind_constant(), "m", a, &attn);
  CHECK(y.shape() == Shape{8, 6});
  REQUIRE(attn.size() == 2);
  for (const auto& w : attn) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) s += w.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("mhsa with zeroed value and output projections is the identity") {
  ParamLayout l;
  add_mhsa(l, "m", 8);
  ParamStore<double> store(l, 5);
  for (const char* n : {"m.v.weight", "m.v.bias", "m.o.weight", "m.o.bias"}) zero_param(store, n);
  const auto x = random_tensor<double>({8, 5}, 6);
  AttentionOptions a;
  a.heads = 4;
  CHECK(mhsa(constant(x), store.bind_constant(), "m", a).value() == x);
}

TEST_CASE("mhsa without positional encoding is permutation equivariant") {
  ParamLayout l;
  add_mhsa(l, "m", 8);
  ParamStore<double> store(l, 7);
  AttentionOptions a;
  a.heads = 2;
  a.positional = false;
  const auto x = random_tensor<double>({8, 4}, 8);
  const std::size_t perm[] = {2, 0, 3, 1};
  Tensor<double> xp({8, 4});
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t t = 0; t < 4; ++t) xp.at(c, t) = x.at(c, perm[t]);
  }
  const auto y = mhsa(constant(x), store.bind_constant(), "m", a).value();
  const auto yp = mhsa(constant(xp), store.bind_constant(), "m", a).value();
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t t = 0; t < 4; ++t) CHECK(yp.at(c, t) == doctest::Approx(y.at(c, perm[t])).epsilon(1e-12));
  }
  // The positional table breaks the symmetry.
  a.positional = true;
  const auto z = mhsa(constant(x), store.bind_constant(), "m", a).value();
  const auto zp = mhsa(constant(xp), store.bind_constant(), "m", a).value();
  double diff = 0.0;
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t t = 0; t < 4; ++t) diff = std::max(diff, std::abs(zp.at(c, t) - z.at(c, perm[t])));
  }
  CHECK(diff > 1e-6);
}

TEST_CASE("mhsa rejects mismatched widths and head counts") {
  ParamLayout l;
  add_mhsa(l, "m", 8);
  ParamStore<double> store(l, 9);
  AttentionOptions a;
  a.heads = 3;
  CHECK_THROWS_AS(mhsa(constant(random_tensor<double>({8, 4}, 1)), store.bind_constant(), "m", a), ConfigError);
  a.heads = 2;
  CHECK_THROWS(mhsa(constant(random_tensor<double>({6, 4}, 1)), store.bind_constant(), "m", a));
}

TEST_CASE("mhsa dropout is reproducible with a fixed seed") {
  ParamLayout l;
  add_mhsa(l, "m", 8);
  ParamStore<float> store(l, 11);
  const auto x = random_tensor<float>({8, 6}, 12);
  AttentionOptions a;
  a.heads = 2;
  CHECK(mhsa(constant(x), store.bind_constant(), "m", a).value() ==
        mhsa(constant(x), store.bind_constant(), "m", a).value());
  Rng r1(5), r2(5), r3(6);
  a.dropout = {0.1, &r1};
  const auto y1 = mhsa(constant(x), store.bind_constant(), "m", a).value();
  a.dropout = {0.1, &r2};
  const auto y2 = mhsa(constant(x), store.bind_constant(), "m", a).value();
  a.dropout = {0.1, &r3};
  const auto y3 = mhsa(constant(x), store.bind_constant(), "m", a).value();
  CHECK(y1 == y2);
  CHECK_FALSE(y1 == y3);
}

TEST_CASE("ffn keeps the shape and is the identity with a zeroed last conv") {
  ParamLayout l;
  add_ffn(l, "f", 4);
  ParamStore<double> store(l, 13);
  CHECK(store.get("f.conv1.weight").value.shape() == Shape{8, 4, 1});
  CHECK(store.get("f.dw.weight").value.shape() == Shape{8, 1, 5});
  CHECK(store.get("f.conv3.weight").value.shape() == Shape{4, 8, 1});
  for (std::size_t t : {8u, 16u, 62u}) {
    const auto y = ffn(constant(random_tensor<double>({4, t}, t)), store.bind_constant(), "f").value();
    CHECK(y.shape() == Shape{4, t});
    CHECK(y.all_finite());
  }
  zero_param(store, "f.conv3.weight");
  const auto x = random_tensor<double>({4, 16}, 14);
  CHECK(ffn(constant(x), store.bind_constant(), "f").value() == x);
}

TEST_CASE("every layer type passes the finite-difference check") {
  const auto checks = layer_gradchecks(3, 1e-4);
  CHECK(checks.size() >= 20);
  for (const auto& c : checks) {
    INFO(c.name << ": " << c.report.summary());
    CHECK(c.passed());
    CHECK(c.report.max_rel_error < 1e-4);
  }
}
