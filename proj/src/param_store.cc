#include "tdanet/param_store.h"

#include <cmath>

namespace tdanet {

void ParamLayout::add(std::string name, Shape shape, Init init, std::size_t fan_in) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = specs_.size();
  specs_.push_back({std::move(name), std::move(shape), init, fan_in});
}

std::size_t ParamLayout::total_elements() const {
  std::size_t n = 0;
  for (const auto& s : specs_) n += shape_numel(s.shape);
  return n;
}

template <typename T>
ParamStore<T>::ParamStore(const ParamLayout& layout, std::uint64_t seed) : seed_(seed) {
  Rng root = Rng(seed).split("init");
  for (std::size_t i = 0; i < layout.specs().size(); ++i) {
    const ParamSpec& spec = layout.specs()[i];
    Tensor<T> value(spec.shape);
    Rng rng = root.split(hash_string(spec.name));
    switch (spec.init) {
      case Init::kZeros:
        break;
      case Init::kOnes:
        value.fill(T(1));
        break;
      case Init::kPReLU:
        value.fill(T(0.25));
        break;
      case Init::kFanIn:
      case Init::kBiasFanIn: {
        std::size_t fan_in = spec.fan_in;
        if (spec.init == Init::kFanIn) {
          fan_in = 1;
          for (std::size_t d = 1; d < spec.shape.size(); ++d) fan_in *= spec.shape[d];
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
        for (auto& v : value.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
    }
    add(spec.name, std::move(value));
  }
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
Parameter<T>& ParamStore<T>::get(const std::string& name) {
  return params_[index_of(name)];
}

template <typename T>
const Parameter<T>& ParamStore<T>::get(const std::string& name) const {
  return params_[index_of(name)];
}

template <typename T>
void ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_[name] = params_.size();
  params_.push_back({std::move(name), std::move(value), Tensor<T>()});
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.grad = Tensor<T>();
}

template <typename T>
ParamBinding<T> ParamStore<T>::bind() {
  std::vector<std::string> names;
  std::vector<Var<T>> vars;
  names.reserve(params_.size());
  vars.reserve(params_.size());
  for (auto& p : params_) {
    names.push_back(p.name);
    vars.push_back(Var<T>::parameter(p.value, &p.grad));
  }
  return ParamBinding<T>(std::move(names), std::move(vars));
}

template <typename T>
ParamBinding<T> ParamStore<T>::bind_constant() const {
  std::vector<std::string> names;
  std::vector<Var<T>> vars;
  for (const auto& p : params_) {
    names.push_back(p.name);
    vars.push_back(Var<T>::parameter(p.value, nullptr));
  }
  return ParamBinding<T>(std::move(names), std::move(vars));
}

template <typename T>
ParamBinding<T>::ParamBinding(std::vector<std::string> names, std::vector<Var<T>> vars)
    : vars_(std::move(vars)) {
  if (names.size() != vars_.size()) throw DimensionError("ParamBinding: names/vars length mismatch");
  for (std::size_t i = 0; i < names.size(); ++i) index_[names[i]] = i;
}

template <typename T>
const Var<T>& ParamBinding<T>::operator()(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("parameter not bound: " + name);
  return vars_[it->second];
}

template class ParamStore<float>;
template class ParamStore<double>;
template class ParamBinding<float>;
template class ParamBinding<double>;

}  // namespace tdanet
