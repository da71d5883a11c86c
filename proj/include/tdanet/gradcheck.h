#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tdanet/autograd.h"

namespace tdanet {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Per-input cap on probed elements (evenly strided); 0 probes everything.
  std::size_t max_elements_per_input = 0;
  // Components whose magnitude is below this fraction of the largest
  // numerical component over all inputs are compared against that floor.
  double relative_floor = 1e-3;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probed = 0;
  std::string summary() const;
};

using ScalarFunction = std::function<Var<double>(const std::vector<Var<double>>&)>;

// Compares backward() against central differences of f at `inputs`.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace tdanet
