#pragma once

#include <cstdint>
#include <vector>

#include "tdanet/param_store.h"

namespace tdanet {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are kept per parameter, in store order.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& params, AdamOptions options = {});

  // Applies one update from the accumulated gradients. A non-finite
  // gradient raises NumericError naming the parameter; nothing is updated.
  void step();

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  const AdamOptions& options() const { return options_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t steps) { steps_ = steps; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

 private:
  ParamStore<T>* params_;
  AdamOptions options_;
  std::uint64_t steps_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

template <typename T>
double global_grad_norm(const ParamStore<T>& params);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the applied factor in (0, 1].
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace tdanet
