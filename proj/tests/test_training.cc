#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "tdanet/error.h"
#include "tdanet/gradcheck.h"
#include "tdanet/loss.h"
#include "tdanet/optim.h"
#include "tdanet/trainer.h"
#include "test_helpers.h"

using namespace tdanet;
using testing::random_tensor;

namespace {

std::vector<double> dvec(const Tensor<double>& t) { return testing::as_vector(t); }

double si_snr_of(const std::vector<double>& s, const std::vector<double>& t, bool zero_mean = true) {
  SiSnrOptions o;
  o.zero_mean = zero_mean;
  return si_snr<double>(std::span<const double>(s), std::span<const double>(t), o);
}

// Direct textbook evaluation, used as an oracle.
double reference_si_snr(std::vector<double> s, std::vector<double> t) {
  const double ms = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
  const double mt = std::accumulate(t.begin(), t.end(), 0.0) / t.size();
  for (auto& v : s) v -= ms;
  for (auto& v : t) v -= mt;
  const double st = std::inner_product(s.begin(), s.end(), t.begin(), 0.0);
  const double tt = std::inner_product(t.begin(), t.end(), t.begin(), 0.0);
  double a = 0.0, e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double at = st / tt * t[i];
    a += at * at;
    e += (s[i] - at) * (s[i] - at);
  }
  return 10.0 * std::log10(a / e);
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("tdanet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.channels = 16;
  c.bottleneck = 16;
  c.depth = 2;
  c.unfolds = 2;
  c.heads = 2;
  c.dropout = 0.0;
  return c;
}

std::vector<TrainExample> examples(std::size_t n, std::uint64_t seed) {
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(to_train_example(make_example(Recipe::kLrs2Style, seed + i, 0.2)));
  }
  return out;
}

}  // namespace

TEST_CASE("si-snr worked examples") {
  const std::vector<double> t = {1.0, -2.0, 3.0, -1.5, 0.5, -1.0};
  CHECK(si_snr_of(t, t) == doctest::Approx(60.0));
  std::vector<double> scaled = t;
  for (auto& v : scaled) v *= -0.01;
  CHECK(si_snr_of(scaled, t) == doctest::Approx(60.0));
  CHECK(si_snr_of({1.0, 0.0}, {1.0, 1.0}, false) == doctest::Approx(0.0).epsilon(1e-12));
  // Estimate = target + orthogonal component of equal energy.
  CHECK(si_snr_of({1.0, 1.0, 1.0, -1.0}, {1.0, 0.0, 1.0, 0.0}, false) == doctest::Approx(0.0).epsilon(1e-12));
  // Estimate = target + orthogonal component with a tenth of the energy.
  const double k = std::sqrt(0.1);
  CHECK(si_snr_of({1.0, k, 1.0, -k}, {1.0, 0.0, 1.0, 0.0}, false) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_THROWS_AS(si_snr_of({1.0, 2.0}, {0.0, 0.0}), InputError);
  CHECK_THROWS_AS(si_snr_of({1.0, 2.0}, {1.0, 2.0, 3.0}), InputError);
  CHECK(si_snr_of({0.0, 0.0, 0.0}, {1.0, 2.0, 0.0}) == -60.0);
}

TEST_CASE("si-snr matches the textbook formula and is scale invariant") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t = dvec(random_tensor<double>({1, 400}, seed));
    auto s = dvec(random_tensor<double>({1, 400}, seed + 100));
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = t[i] + 0.5 * s[i];
    const double ref = reference_si_snr(s, t);
    CHECK(si_snr_of(s, t) == doctest::Approx(ref).epsilon(1e-10));
    for (double alpha : {0.1, 1.0, 7.3}) {
      auto sa = s, ta = t;
      for (auto& v : sa) v *= alpha;
      CHECK(si_snr_of(sa, t) == doctest::Approx(ref).epsilon(1e-9));
      for (auto& v : ta) v *= alpha;
      CHECK(si_snr_of(s, ta) == doctest::Approx(ref).epsilon(1e-9));
    }
  }
}

TEST_CASE("projection terms are orthogonal") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t = dvec(random_tensor<double>({1, 300}, seed));
    const auto s = dvec(random_tensor<double>({1, 300}, seed + 50));
    const SiSnrTerms terms = si_snr_terms<double>(std::span<const double>(s), std::span<const double>(t));
    const double dot = std::inner_product(terms.a_target.begin(), terms.a_target.end(), terms.e_noise.begin(), 0.0);
    const double na = std::sqrt(std::inner_product(terms.a_target.begin(), terms.a_target.end(),
                                                   terms.a_target.begin(), 0.0));
    const double ne = std::sqrt(std::inner_product(terms.e_noise.begin(), terms.e_noise.end(),
                                                   terms.e_noise.begin(), 0.0));
    CHECK(std::abs(dot) / (na * ne) < 1e-9);
  }
}

TEST_CASE("graph si-snr value and gradient") {
  const auto t = random_tensor<double>({1, 64}, 3);
  const auto s0 = random_tensor<double>({1, 64}, 4);
  auto s = Var<double>::leaf(s0, true);
  const auto v = si_snr(s, t);
  CHECK(v.item() == doctest::Approx(si_snr_of(dvec(s0), dvec(t))));
  for (bool zm : {true, false}) {
    SiSnrOptions o;
    o.zero_mean = zm;
    const auto report = grad_check(
        [&](const std::vector<Var<double>>& in) { return si_snr(in[0], t, o); }, {s0});
    CHECK(report.max_rel_error < 1e-6);
  }
}

TEST_CASE("pit chooses the best of all permutations") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + static_cast<std::size_t>(trial % 3);
    std::vector<Tensor<double>> targets;
    std::vector<Var<double>> estimates;
    for (std::size_t i = 0; i < c; ++i) targets.push_back(random_tensor<double>({1, 50}, rng.engine()()));
    for (std::size_t i = 0; i < c; ++i) {
      auto e = random_tensor<double>({1, 50}, rng.engine()(), 0.7);
      const auto& near = targets[(i + trial) % c];
      for (std::size_t k = 0; k < e.size(); ++k) e[k] += near[k];
      estimates.push_back(Var<double>::leaf(e));
    }
    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        total += reference_si_snr(dvec(estimates[i].value()), dvec(targets[perm[i]]));
      }
      best = std::min(best, -total / static_cast<double>(c));
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto pit = pit_loss(estimates, targets);
    CHECK(pit.loss.item() == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("pit swap and tie cases") {
  const auto a = random_tensor<double>({1, 40}, 5), b = random_tensor<double>({1, 40}, 6);
  auto swapped = pit_loss<double>({Var<double>::leaf(b), Var<double>::leaf(a)}, {a, b});
  CHECK(swapped.perm == std::vector<std::size_t>{1, 0});
  CHECK(swapped.loss.item() == doctest::Approx(-60.0));
  auto tie = pit_loss<double>({Var<double>::leaf(a), Var<double>::leaf(a)}, {a, a});
  CHECK(tie.perm == std::vector<std::size_t>{0, 1});
  CHECK(best_permutation({{1.0, 1.0}, {1.0, 1.0}}).perm == std::vector<std::size_t>{0, 1});
  CHECK(best_permutation({{0.0, 5.0, 0.0}, {0.0, 0.0, 5.0}, {5.0, 0.0, 0.0}}).perm ==
        std::vector<std::size_t>{1, 2, 0});
  CHECK_THROWS_AS(pit_loss<double>({Var<double>::leaf(a)}, {a, b}), InputError);
}

TEST_CASE("pit loss gradient") {
  const auto a = random_tensor<double>({1, 30}, 7), b = random_tensor<double>({1, 30}, 8);
  const auto e1 = random_tensor<double>({1, 30}, 9), e2 = random_tensor<double>({1, 30}, 10);
  const auto report = grad_check(
      [&](const std::vector<Var<double>>& in) { return pit_loss<double>({in[0], in[1]}, {a, b}).loss; },
      {e1, e2});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("adam first step and zero gradient") {
  ParamStore<double> store;
  store.add("w", Tensor<double>({3}, 1.0));
  store.add("z", Tensor<double>({2}, 2.0));
  Adam<double> adam(store, {.lr = 0.01});
  store.get("w").grad = Tensor<double>({3});
  store.get("w").grad[0] = 0.5;
  store.get("w").grad[1] = -3.0;
  store.get("w").grad[2] = 0.0;
  store.get("z").grad = Tensor<double>({2}, 0.0);
  adam.step();
  // m_hat = g, v_hat = g^2 after bias correction.
  CHECK(store.get("w").value[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(store.get("w").value[1] == doctest::Approx(1.0 + 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(store.get("w").value[2] == 1.0);
  CHECK(store.get("z").value == Tensor<double>({2}, 2.0));
  CHECK(adam.steps() == 1);

  // Second step with the same gradient: closed form.
  store.get("w").grad[0] = 0.5;
  adam.step();
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 0.5, v = 0.999 * 0.001 * 0.25 + 0.001 * 0.25;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double w1 = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
  CHECK(store.get("w").value[0] == doctest::Approx(w1 - 0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam is deterministic and rejects non-finite gradients") {
  auto run = [] {
    ParamStore<float> store;
    store.add("w", random_tensor<float>({10}, 1));
    Adam<float> adam(store);
    for (int i = 0; i < 5; ++i) {
      store.get("w").grad = random_tensor<float>({10}, 10 + i);
      adam.step();
    }
    return store.get("w").value;
  };
  CHECK(run() == run());
  ParamStore<float> store;
  store.add("layer.weight", Tensor<float>({2}, 1.0f));
  Adam<float> adam(store);
  store.get("layer.weight").grad = Tensor<float>({2}, std::nanf(""));
  try {
    adam.step();
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
  CHECK(store.get("layer.weight").value == Tensor<float>({2}, 1.0f));
  store.get("layer.weight").grad = Tensor<float>({3}, 1.0f);
  CHECK_THROWS_AS(adam.step(), DimensionError);
}

TEST_CASE("gradient clipping") {
  ParamStore<double> store;
  store.add("a", Tensor<double>({1}));
  store.add("b", Tensor<double>({1}));
  store.get("a").grad = Tensor<double>({1}, 6.0);
  store.get("b").grad = Tensor<double>({1}, 8.0);
  CHECK(global_grad_norm(store) == doctest::Approx(10.0));
  const double f = clip_grad_norm(store, 5.0);
  CHECK(f == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(global_grad_norm(store) == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(global_grad_norm(store) <= 5.0);
  CHECK(store.get("a").grad[0] / store.get("b").grad[0] == doctest::Approx(0.75));
  store.get("a").grad[0] = 1.8;
  store.get("b").grad[0] = 2.4;
  CHECK(clip_grad_norm(store, 5.0) == 1.0);
  CHECK(store.get("a").grad[0] == 1.8);
  CHECK(store.get("b").grad[0] == 2.4);
}

TEST_CASE("plateau schedule halves at 15 and stops at 30") {
  PlateauSchedule s(15, 30);
  CHECK(s.observe(1.0).improved);
  int halvings = 0, stopped_at = 0;
  for (int e = 1; e <= 40 && stopped_at == 0; ++e) {
    const auto ev = s.observe(1.0);
    if (ev.halve_lr) {
      ++halvings;
      CHECK(e == 15);
    }
    if (ev.stop) stopped_at = e;
  }
  CHECK(halvings == 1);
  CHECK(stopped_at == 30);
  PlateauSchedule r(15, 30);
  r.observe(1.0);
  for (int e = 0; e < 10; ++e) r.observe(2.0);
  CHECK(r.bad_epochs() == 10);
  CHECK(r.observe(0.5).improved);
  CHECK(r.bad_epochs() == 0);
  CHECK(r.best() == 0.5);
}

TEST_CASE("train config serialization") {
  TrainConfig c;
  c.lr = 5e-4;
  c.seed = 7;
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  auto j = c.to_json();
  j["momentum"] = 0.5;
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training memorizes a single example") {
  TDANet<float> model(tiny_model(), 3);
  TrainConfig cfg;
  cfg.lr = 3e-3;
  Trainer trainer(model, cfg);
  const auto data = examples(1, 100);
  std::vector<double> losses;
  for (int i = 0; i < 50; ++i) losses.push_back(trainer.train_step({&data[0]}, nullptr));
  MESSAGE("loss " << losses.front() << " -> " << losses.back());
  CHECK(losses.back() < losses.front() - 3.0);
  CHECK(trainer.evaluate(data) < losses.front());
  CHECK(trainer.last_grad_norm() > 0.0);
}

TEST_CASE("fit writes logs and checkpoints, and resume continues bit-exactly") {
  const auto train = examples(3, 200), val = examples(2, 300);
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.max_epochs = 3;

  const auto full_dir = temp_dir("fit_full");
  TDANet<float> full(tiny_model(), 4);
  Trainer t_full(full, cfg, full_dir);
  const TrainResult r = t_full.fit(train, val);
  CHECK(r.epochs.size() == 3);
  for (const char* f : {"train_log.csv", "last.json", "best.json", "best", "optimizer.json", "trainer_state.json"}) {
    CHECK(std::filesystem::exists(full_dir / f));
  }
  std::ifstream log(full_dir / "train_log.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line == "epoch,train_loss,val_loss,lr,wall_time_s");
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 3);

  const auto part_dir = temp_dir("fit_part");
  {
    TDANet<float> m(tiny_model(), 4);
    TrainConfig two = cfg;
    two.max_epochs = 2;
    Trainer t(m, two, part_dir);
    t.fit(train, val);
  }
  TDANet<float> resumed(tiny_model(), 99);
  Trainer t(resumed, cfg, part_dir);
  REQUIRE(t.resume());
  CHECK(t.next_epoch() == 3);
  const TrainResult rr = t.fit(train, val);
  REQUIRE(rr.epochs.size() == 1);
  CHECK(rr.epochs[0].epoch == 3);
  CHECK(rr.epochs[0].val_loss == r.epochs[2].val_loss);
  for (std::size_t i = 0; i < full.params().size(); ++i) {
    CHECK(full.params()[i].value == resumed.params()[i].value);
  }
  TDANet<float> fresh(tiny_model(), 4);
  Trainer none(fresh, cfg, temp_dir("fit_none"));
  CHECK_FALSE(none.resume());
  CHECK_THROWS_AS(none.fit({}, val), ConfigError);
}
