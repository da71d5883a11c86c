#include "tdanet/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tdanet {

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%s max_rel_err=%.3e probed=%zu worst=input%zu[%zu] analytic=%.6e numeric=%.6e",
                passed ? "PASS" : "FAIL", max_rel_error, probed, worst_input, worst_index,
                worst_analytic, worst_numeric);
  return buf;
}

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options) {
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(Var<double>::leaf(t, true));
  Var<double> out = f(leaves);
  backward(out);

  auto evaluate = [&](std::size_t which, std::size_t idx, double delta) {
    NoGradGuard guard;
    std::vector<Var<double>> probe;
    probe.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor<double> t = inputs[i];
      if (i == which) t[idx] += delta;
      probe.push_back(Var<double>::leaf(std::move(t)));
    }
    return f(probe).item();
  };

  struct Probe {
    std::size_t input;
    std::size_t index;
    double numeric;
  };
  std::vector<Probe> probes;
  double ref = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::size_t n = inputs[i].size();
    std::size_t stride = 1;
    if (options.max_elements_per_input > 0 && n > options.max_elements_per_input) {
      stride = (n + options.max_elements_per_input - 1) / options.max_elements_per_input;
    }
    for (std::size_t j = 0; j < n; j += stride) {
      const double plus = evaluate(i, j, options.step);
      const double minus = evaluate(i, j, -options.step);
      probes.push_back({i, j, (plus - minus) / (2.0 * options.step)});
      ref = std::max(ref, std::abs(probes.back().numeric));
    }
  }
  const double floor = std::max(ref * options.relative_floor, 1e-12);
  GradCheckReport report;
  for (const Probe& p : probes) {
    const Tensor<double>& analytic = leaves[p.input].grad();
    const double a = analytic.empty() ? 0.0 : analytic[p.index];
    const double denom = std::max({std::abs(a), std::abs(p.numeric), floor});
    const double err = std::abs(a - p.numeric) / denom;
    ++report.probed;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_input = p.input;
      report.worst_index = p.index;
      report.worst_analytic = a;
      report.worst_numeric = p.numeric;
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace tdanet
