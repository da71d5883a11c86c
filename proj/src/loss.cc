#include "tdanet/loss.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tdanet/ops.h"

namespace tdanet {

namespace {

struct SiSnrCore {
  std::vector<double> s;  // (centered) estimate
  std::vector<double> t;  // (centered) target
  double alpha = 0.0;
  double a_energy = 0.0;
  double denom = 0.0;
  bool floor_branch = false;
  bool clamped = false;
  double value = 0.0;
};

template <typename T>
std::vector<double> prepared(std::span<const T> x, bool zero_mean) {
  std::vector<double> out(x.begin(), x.end());
  if (zero_mean && !out.empty()) {
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    for (auto& v : out) v -= mean;
  }
  return out;
}

template <typename T>
SiSnrCore evaluate(std::span<const T> estimate, std::span<const T> target, const SiSnrOptions& o) {
  if (estimate.size() != target.size()) {
    throw InputError("si_snr: estimate has " + std::to_string(estimate.size()) + " samples, target " +
                     std::to_string(target.size()));
  }
  if (estimate.empty()) throw InputError("si_snr: empty signals");
  SiSnrCore c;
  c.s = prepared(estimate, o.zero_mean);
  c.t = prepared(target, o.zero_mean);
  double st = 0.0, tt = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < c.s.size(); ++i) {
    st += c.s[i] * c.t[i];
    tt += c.t[i] * c.t[i];
    ss += c.s[i] * c.s[i];
  }
  if (tt == 0.0) throw InputError("si_snr: target is identically zero");
  const double tt_floor = std::max(tt, o.eps);
  c.alpha = st / tt_floor;
  c.a_energy = c.alpha * c.alpha * tt;
  double e_energy = 0.0;
  for (std::size_t i = 0; i < c.s.size(); ++i) {
    const double e = c.s[i] - c.alpha * c.t[i];
    e_energy += e * e;
  }
  const double floor = o.eps * ss;
  c.floor_branch = e_energy < floor;
  c.denom = c.floor_branch ? floor : e_energy;
  if (c.a_energy <= 0.0 || ss == 0.0) {
    c.value = -o.clamp_db;
    c.clamped = true;
    return c;
  }
  const double db = c.denom > 0.0 ? 10.0 * std::log10(c.a_energy / c.denom) : o.clamp_db;
  c.clamped = db <= -o.clamp_db || db >= o.clamp_db;
  c.value = std::clamp(db, -o.clamp_db, o.clamp_db);
  return c;
}

}  // namespace

template <typename T>
SiSnrTerms si_snr_terms(std::span<const T> estimate, std::span<const T> target, const SiSnrOptions& o) {
  const SiSnrCore c = evaluate(estimate, target, o);
  SiSnrTerms terms;
  terms.a_target.resize(c.s.size());
  terms.e_noise.resize(c.s.size());
  for (std::size_t i = 0; i < c.s.size(); ++i) {
    terms.a_target[i] = c.alpha * c.t[i];
    terms.e_noise[i] = c.s[i] - terms.a_target[i];
  }
  terms.value_db = c.value;
  return terms;
}

template <typename T>
double si_snr(std::span<const T> estimate, std::span<const T> target, const SiSnrOptions& o) {
  return evaluate(estimate, target, o).value;
}

template <typename T>
Var<T> si_snr(const Var<T>& estimate, const Tensor<T>& target, const SiSnrOptions& o) {
  SiSnrCore c = evaluate<T>(estimate.value().values(), target.values(), o);
  Tensor<T> out({1}, static_cast<T>(c.value));
  return make_result<T>("si_snr", std::move(out), {estimate},
                        [c = std::move(c), o](Node<T>& self) {
                          if (c.clamped) return;
                          const std::size_t n = c.s.size();
                          double tt = 0.0, te = 0.0;
                          std::vector<double> e(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            e[i] = c.s[i] - c.alpha * c.t[i];
                            tt += c.t[i] * c.t[i];
                            te += c.t[i] * e[i];
                          }
                          const double tt_floor = std::max(tt, o.eps);
                          const double k = 10.0 / std::log(10.0) * static_cast<double>(self.grad[0]);
                          // d||A||^2/ds = 2 alpha (||t||^2 / tt_floor) t
                          const double ca = 2.0 * c.alpha * tt / tt_floor / c.a_energy;
                          std::vector<double> g(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            double dden;
                            if (c.floor_branch) {
                              dden = 2.0 * o.eps * c.s[i];
                            } else {
                              dden = 2.0 * (e[i] - c.t[i] * te / tt_floor);
                            }
                            g[i] = k * (ca * c.t[i] - dden / c.denom);
                          }
                          if (o.zero_mean) {
                            const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(n);
                            for (auto& v : g) v -= mean;
                          }
                          auto& dst = self.inputs[0]->grad_buffer();
                          for (std::size_t i = 0; i < n; ++i) dst[i] += static_cast<T>(g[i]);
                        });
}

PitResult best_permutation(const std::vector<std::vector<double>>& pairwise) {
  const std::size_t count = pairwise.size();
  if (count == 0 || count > 4) throw InputError("pit: speaker count must be 1-4");
  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  PitResult best;
  bool first = true;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) total += pairwise[i][perm[i]];
    const double loss = -total / static_cast<double>(count);
    if (first || loss < best.loss) {
      best.loss = loss;
      best.perm = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

template <typename T>
PitLoss<T> pit_loss(const std::vector<Var<T>>& estimates, const std::vector<Tensor<T>>& targets,
                    const SiSnrOptions& o) {
  const std::size_t count = estimates.size();
  if (targets.size() != count) {
    throw InputError("pit: " + std::to_string(count) + " estimates vs " + std::to_string(targets.size()) +
                     " targets");
  }
  std::vector<std::vector<Var<T>>> terms(count);
  std::vector<std::vector<double>> values(count, std::vector<double>(count));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      if (estimates[i].size() != targets[j].size()) {
        throw InputError("pit: length mismatch between estimate " + std::to_string(i) + " and target " +
                         std::to_string(j));
      }
      terms[i].push_back(si_snr(estimates[i], targets[j], o));
      values[i][j] = static_cast<double>(terms[i][j].item());
    }
  }
  const PitResult best = best_permutation(values);
  std::vector<Var<T>> chosen;
  for (std::size_t i = 0; i < count; ++i) chosen.push_back(terms[i][best.perm[i]]);
  PitLoss<T> out;
  out.loss = scale(add_n(chosen), static_cast<T>(-1.0 / static_cast<double>(count)));
  out.perm = best.perm;
  return out;
}

template SiSnrTerms si_snr_terms(std::span<const float>, std::span<const float>, const SiSnrOptions&);
template SiSnrTerms si_snr_terms(std::span<const double>, std::span<const double>, const SiSnrOptions&);
template double si_snr(std::span<const float>, std::span<const float>, const SiSnrOptions&);
template double si_snr(std::span<const double>, std::span<const double>, const SiSnrOptions&);
template Var<float> si_snr(const Var<float>&, const Tensor<float>&, const SiSnrOptions&);
template Var<double> si_snr(const Var<double>&, const Tensor<double>&, const SiSnrOptions&);
template PitLoss<float> pit_loss(const std::vector<Var<float>>&, const std::vector<Tensor<float>>&,
                                 const SiSnrOptions&);
template PitLoss<double> pit_loss(const std::vector<Var<double>>&, const std::vector<Tensor<double>>&,
                                  const SiSnrOptions&);

}  // namespace tdanet
