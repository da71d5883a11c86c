#include <doctest.h>

#include <cmath>

#include "tdanet/error.h"
#include "tdanet/gradcheck.h"
#include "tdanet/ops.h"
#include "test_helpers.h"

using namespace tdanet;
using testing::as_vector;
using testing::constant;
using testing::from_rows;
using testing::random_tensor;

namespace {

// Direct correlation with explicit zero padding, no shared code with ops.cc.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const ConvSpec& s) {
  const std::size_t cin = x.dim(0), t = x.dim(1), cout = w.dim(0), k = w.dim(2);
  const std::size_t per_group_in = cin / s.groups, per_group_out = cout / s.groups;
  const long span = static_cast<long>(s.dilation * (k - 1) + 1);
  const long tout = (static_cast<long>(t) + 2 * s.padding - span) / s.stride + 1;
  Tensor<double> y({cout, static_cast<std::size_t>(tout)});
  for (std::size_t o = 0; o < cout; ++o) {
    const std::size_t g = o / per_group_out;
    for (long to = 0; to < tout; ++to) {
      double acc = 0.0;
      for (std::size_t ci = 0; ci < per_group_in; ++ci) {
        for (std::size_t j = 0; j < k; ++j) {
          const long ti = to * s.stride + static_cast<long>(j) * s.dilation - s.padding;
          if (ti < 0 || ti >= static_cast<long>(t)) continue;
          acc += w[(o * per_group_in + ci) * k + j] * x.at(g * per_group_in + ci, static_cast<std::size_t>(ti));
        }
      }
      y.at(o, static_cast<std::size_t>(to)) = acc;
    }
  }
  return y;
}

// Overlap-add of scaled kernels, then cropping of the padding.
Tensor<double> conv_transpose_oracle(const Tensor<double>& x, const Tensor<double>& w, int stride) {
  const std::size_t cin = x.dim(0), t = x.dim(1), cout = w.dim(1), k = w.dim(2);
  Tensor<double> y({cout, (t - 1) * stride + k});
  for (std::size_t i = 0; i < cin; ++i) {
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t ti = 0; ti < t; ++ti) {
        for (std::size_t j = 0; j < k; ++j) y.at(o, ti * stride + j) += x.at(i, ti) * w[(i * cout + o) * k + j];
      }
    }
  }
  return y;
}

double inner(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.rank() == 2);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5f);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(require_same_shape({2, 3}, {3, 2}, "x"), DimensionError);
  try {
    require_same_shape({2, 3}, {3, 2}, "x");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  const Tensor<double> d = t.cast<double>();
  CHECK(d[5] == 1.5);
}

TEST_CASE("conv1d hand-evaluated examples") {
  const auto x = constant(from_rows<double>({{1, 2, 3}}));
  Tensor<double> identity({1, 1, 1}, 1.0);
  CHECK(as_vector(conv1d(x, constant(identity)).value()) == std::vector<double>{1, 2, 3});
  Tensor<double> pair({1, 1, 2}, 1.0);
  CHECK(as_vector(conv1d(x, constant(pair)).value()) == std::vector<double>{3, 5});
}

TEST_CASE("conv1d output length formula") {
  ConvSpec s{2, 2, 4, 1};
  CHECK(conv_output_length(8, 5, s) == 4);
  const auto x = random_tensor<double>({1, 8}, 1);
  const auto w = random_tensor<double>({1, 1, 5}, 2);
  const auto y = conv1d(constant(x), constant(w), s).value();
  CHECK(y.dim(1) == 4);
  const auto ref = conv_oracle(x, w, s);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv1d matches a brute-force correlation oracle") {
  const ConvSpec specs[] = {{1, 1, 0, 1}, {1, 1, 2, 1}, {2, 2, 4, 1}, {2, 2, 4, 4}, {16, 1, 0, 1}, {1, 1, 2, 2}, {3, 2, 1, 1}};
  std::uint64_t seed = 10;
  for (const ConvSpec& s : specs) {
    const std::size_t cin = s.groups == 4 ? 4 : 2, cout = s.groups == 4 ? 4 : 6, k = s.stride == 16 ? 64 : 5;
    const auto x = random_tensor<double>({cin, 96}, seed++);
    const auto w = random_tensor<double>({cout, cin / s.groups, k}, seed++);
    const auto y = conv1d(constant(x), constant(w), s).value();
    const auto ref = conv_oracle(x, w, s);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d errors") {
  const auto x = constant(random_tensor<double>({2, 8}, 1));
  const auto w = constant(random_tensor<double>({3, 2, 3}, 2));
  CHECK_THROWS_AS(conv1d(x, w, ConvSpec{0, 1, 0, 1}), ConfigError);
  CHECK_THROWS_AS(conv1d(x, w, ConvSpec{1, 0, 0, 1}), ConfigError);
  const auto bad = constant(random_tensor<double>({3, 4, 3}, 3));
  CHECK_THROWS_AS(conv1d(x, bad), DimensionError);
}

TEST_CASE("conv_transpose1d examples") {
  Tensor<double> k4({1, 1, 4}, 1.0);
  ConvSpec s4;
  s4.stride = 4;
  CHECK(as_vector(conv_transpose1d(constant(from_rows<double>({{1}})), constant(k4), s4).value()) ==
        std::vector<double>{1, 1, 1, 1});
  ConvSpec s2;
  s2.stride = 2;
  const auto y = conv_transpose1d(constant(from_rows<double>({{1, 1}})), constant(k4), s2).value();
  CHECK(y.dim(1) == 6);
  CHECK(as_vector(y) == std::vector<double>{1, 1, 2, 2, 1, 1});
  CHECK(conv_transpose_output_length(2, 4, s2, 0) == 6);
}

TEST_CASE("conv_transpose1d matches an overlap-add oracle") {
  for (int stride : {1, 2, 16}) {
    const auto x = random_tensor<double>({3, 20}, 30 + stride);
    const auto w = random_tensor<double>({3, 2, stride == 16 ? 64u : 5u}, 40 + stride);
    ConvSpec s;
    s.stride = stride;
    const auto y = conv_transpose1d(constant(x), constant(w), s).value();
    const auto ref = conv_transpose_oracle(x, w, stride);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv and transposed conv are adjoint") {
  struct Case {
    std::size_t cin, cout, k, t;
    ConvSpec spec;
  };
  // Encoder/decoder, down-sampling, same-length depthwise and 1x1 shapes.
  const Case cases[] = {{1, 16, 64, 64 + 15 * 16, {16, 1, 0, 1}},
                        {8, 8, 5, 32, {2, 2, 4, 8}},
                        {8, 8, 5, 16, {1, 1, 2, 8}},
                        {6, 8, 1, 16, {1, 1, 0, 1}},
                        {4, 6, 3, 17, {2, 1, 1, 2}}};
  std::uint64_t seed = 100;
  for (const Case& c : cases) {
    const auto x = random_tensor<double>({c.cin, c.t}, seed++);
    const auto w = random_tensor<double>({c.cout, c.cin / c.spec.groups, c.k}, seed++);
    const auto y_shape = conv1d(constant(x), constant(w), c.spec).value().shape();
    const auto y = random_tensor<double>(y_shape, seed++);
    const auto cx = conv1d(constant(x), constant(w), c.spec).value();
    // The transposed conv of y (C_out channels) reads w in the same layout.
    const int out_pad = static_cast<int>(c.t) - static_cast<int>(conv_transpose_output_length(y.dim(1), c.k, c.spec, 0));
    const auto cty = conv_transpose1d(constant(y), constant(w), c.spec, out_pad).value();
    REQUIRE(cty.shape() == x.shape());
    const double lhs = inner(cx, y), rhs = inner(x, cty);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("avg_pool1d examples and errors") {
  CHECK(as_vector(avg_pool1d(constant(from_rows<double>({{1, 2, 3, 4}})), 2).value()) == std::vector<double>{1.5, 3.5});
  CHECK(as_vector(avg_pool1d(constant(Tensor<double>({1, 8}, 5.0)), 2).value()) == std::vector<double>{5, 5});
  const auto x = random_tensor<double>({2, 6}, 3);
  CHECK(as_vector(avg_pool1d(constant(x), 6).value()) == as_vector(x));
  CHECK_THROWS_AS(avg_pool1d(constant(x), 4), DimensionError);
}

TEST_CASE("nearest_interp1d examples") {
  CHECK(as_vector(nearest_interp1d(constant(from_rows<double>({{1, 2}})), 4).value()) == std::vector<double>{1, 1, 2, 2});
  CHECK(as_vector(nearest_interp1d(constant(from_rows<double>({{3}})), 3).value()) == std::vector<double>{3, 3, 3});
  const auto x = random_tensor<double>({2, 5}, 4);
  CHECK(as_vector(nearest_interp1d(constant(x), 5).value()) == as_vector(x));
}

TEST_CASE("pooling then upsampling preserves window means") {
  const auto x = random_tensor<double>({3, 32}, 5);
  const auto pooled = avg_pool1d(constant(x), 4);
  const auto up = nearest_interp1d(pooled, 32).value();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t w = 0; w < 4; ++w) {
      double m_x = 0.0, m_up = 0.0;
      for (std::size_t t = 0; t < 8; ++t) {
        m_x += x.at(c, w * 8 + t);
        m_up += up.at(c, w * 8 + t);
      }
      CHECK(m_up / 8 == doctest::Approx(m_x / 8).epsilon(1e-14));
      CHECK(up.at(c, w * 8) == pooled.value().at(c, w));
    }
  }
}

TEST_CASE("backward examples") {
  auto x = Var<double>::leaf(random_tensor<double>({2, 3}, 6), true);
  backward(sum(x));
  for (double g : x.grad().values()) CHECK(g == 1.0);

  auto y = Var<double>::leaf(from_rows<double>({{1, 2}}), true);
  backward(sum(mul(y, y)));
  CHECK(as_vector(y.grad()) == std::vector<double>{2, 4});
}

TEST_CASE("backward through a consumed graph raises") {
  auto x = Var<double>::leaf(random_tensor<double>({1, 4}, 7), true);
  auto s = sum(mul(x, x));
  backward(s);
  CHECK_THROWS_AS(backward(s), StateError);
  auto h = mul(x, x);
  backward(sum(h));
  CHECK_THROWS_AS(sum(h), StateError);
}

TEST_CASE("backward requires a scalar root") {
  auto x = Var<double>::leaf(random_tensor<double>({1, 4}, 8), true);
  CHECK_THROWS_AS(backward(mul(x, x)), DimensionError);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  auto x = Var<double>::leaf(from_rows<double>({{3}}), true);
  auto a = mul(x, x);
  backward(sum(add(a, a)));
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("no-grad mode records nothing") {
  auto x = Var<double>::leaf(random_tensor<double>({1, 4}, 9), true);
  Var<double> y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = sum(mul(x, x));
  }
  CHECK(grad_enabled());
  CHECK(y.node()->inputs.empty());
  CHECK_THROWS_AS(backward(y), StateError);
}

TEST_CASE("non-finite values are rejected while checks are on") {
  const bool before = finite_checks_enabled();
  set_finite_checks(true);
  auto zero = constant(from_rows<double>({{0.0}}));
  CHECK_THROWS_AS(divide(sum(constant(from_rows<double>({{1.0}}))), sum(zero)), NumericError);
  set_finite_checks(before);
}

TEST_CASE("composite graph passes the finite-difference check") {
  const auto f = [](const std::vector<Var<double>>& v) {
    ConvSpec s{2, 1, 1, 1};
    auto h = sigmoid(conv1d(v[0], v[1], s));
    auto m = softmax_rows(matmul(h, h, false, true));
    return sum(mul(m, m));
  };
  const auto report = grad_check(f, {random_tensor<double>({2, 12}, 11), random_tensor<double>({3, 2, 3}, 12)});
  INFO(report.summary());
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("gradient check reports the worst element of a wrong gradient") {
  // y = x^2 with a backward that is off by one at element 1.
  const auto f = [](const std::vector<Var<double>>& v) {
    const auto& x = v[0];
    Tensor<double> out = x.value();
    for (double& e : out.values()) e = e * e;
    auto y = make_result<double>("bad_square", std::move(out), {x}, [](Node<double>& self) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (2.0 * self.inputs[0]->value[i] + (i == 1 ? 1.0 : 0.0));
    });
    return sum(y);
  };
  const auto report = grad_check(f, {from_rows<double>({{0.1, 3.0, -0.2}})});
  CHECK_FALSE(report.passed);
  CHECK(report.worst_index == 1);
  CHECK(report.summary().find("FAIL") != std::string::npos);
}

TEST_CASE("identical inputs give bit-identical outputs") {
  const auto x = random_tensor<float>({4, 64}, 13);
  const auto w = random_tensor<float>({4, 1, 5}, 14);
  const ConvSpec s{2, 2, 4, 4};
  const auto a = conv1d(constant(x), constant(w), s).value();
  const auto b = conv1d(constant(x), constant(w), s).value();
  CHECK(a == b);
}

TEST_CASE("executed MAC counter counts convolution multiplies") {
  reset_executed_macs();
  const auto x = constant(random_tensor<float>({2, 10}, 15));
  const auto w = constant(random_tensor<float>({3, 2, 1}, 16));
  conv1d(x, w);
  CHECK(executed_macs() == 3 * 2 * 10);
}
