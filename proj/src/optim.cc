#include "tdanet/optim.h"

#include <cmath>

#include "tdanet/error.h"

namespace tdanet {

template <typename T>
Adam<T>::Adam(ParamStore<T>& params, AdamOptions options) : params_(&params), options_(options) {
  if (!(options.lr > 0.0) || options.beta1 < 0.0 || options.beta1 >= 1.0 || options.beta2 < 0.0 ||
      options.beta2 >= 1.0 || !(options.eps > 0.0)) {
    throw ConfigError("adam: invalid hyperparameters");
  }
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape(), T(0));
    v_.emplace_back(p.value.shape(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  if (m_.size() != params_->size()) throw StateError("adam: parameter count changed since construction");
  for (std::size_t i = 0; i < params_->size(); ++i) {
    const auto& p = (*params_)[i];
    if (p.value.shape() != m_[i].shape()) throw DimensionError("adam: state shape mismatch for " + p.name);
    if (p.grad.size() != 0 && p.grad.size() != p.value.size()) {
      throw DimensionError("adam: gradient shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) throw NumericError("adam: non-finite gradient in parameter " + p.name);
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_->size(); ++i) {
    auto& p = (*params_)[i];
    T* w = p.value.data();
    const bool has_grad = p.grad.size() == p.value.size();
    const T* g = p.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double gk = has_grad ? static_cast<double>(g[k]) : 0.0;
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - options_.lr * (mk / c1) / (std::sqrt(vk / c2) + options_.eps));
    }
  }
}

template <typename T>
double global_grad_norm(const ParamStore<T>& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    for (const T g : p.grad.values()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max norm must be positive");
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  // Shrink slightly below the bound so float rounding cannot overshoot it.
  const double factor = max_norm / norm * (1.0 - 1e-7);
  for (auto& p : params) {
    for (T& g : p.grad.values()) g = static_cast<T>(g * factor);
  }
  return factor;
}

template class Adam<float>;
template class Adam<double>;
template double global_grad_norm(const ParamStore<float>&);
template double global_grad_norm(const ParamStore<double>&);
template double clip_grad_norm(ParamStore<float>&, double);
template double clip_grad_norm(ParamStore<double>&, double);

}  // namespace tdanet
