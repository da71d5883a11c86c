#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tdanet/autograd.h"
#include "tdanet/rng.h"

namespace tdanet {

enum class Init {
  kZeros,
  kOnes,
  kPReLU,       // 0.25
  kFanIn,       // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), fan_in = prod(shape[1:])
  kBiasFanIn,   // same bound, fan_in given explicitly
};

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init = Init::kZeros;
  std::size_t fan_in = 0;  // for kBiasFanIn
};

// Names and shapes of every learnable tensor, in declaration order.
class ParamLayout {
 public:
  void add(std::string name, Shape shape, Init init, std::size_t fan_in = 0);
  const std::vector<ParamSpec>& specs() const { return specs_; }
  std::size_t total_elements() const;

 private:
  std::vector<ParamSpec> specs_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
class ParamBinding;

// Ordered, uniquely named learnable tensors plus their construction seed.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamLayout& layout, std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;
  void add(std::string name, Tensor<T> value);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  // Binds every parameter as a graph leaf for one forward pass.
  ParamBinding<T> bind();
  ParamBinding<T> bind_constant() const;

 private:
  std::uint64_t seed_ = 0;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

// Graph handles for every parameter of a store (or user leaves in tests).
template <typename T>
class ParamBinding {
 public:
  ParamBinding() = default;
  ParamBinding(std::vector<std::string> names, std::vector<Var<T>> vars);

  const Var<T>& operator()(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Var<T>>& vars() const { return vars_; }

 private:
  std::vector<Var<T>> vars_;
  std::map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class ParamBinding<float>;
extern template class ParamBinding<double>;

}  // namespace tdanet
