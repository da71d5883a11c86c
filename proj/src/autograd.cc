#include "tdanet/autograd.h"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace tdanet {

namespace {
thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_next_order = 0;
#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }

template <typename T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->order = t_next_order++;
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::parameter(const Tensor<T>& value, Tensor<T>* grad_sink) {
  auto node = std::make_shared<Node<T>>();
  node->value = value;
  node->requires_grad = grad_sink != nullptr && t_grad_enabled;
  node->grad_sink = node->requires_grad ? grad_sink : nullptr;
  node->order = t_next_order++;
  node->op = "parameter";
  return Var(std::move(node));
}

template <typename T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  if (finite_checks_enabled() && !value.all_finite()) {
    throw NumericError(std::string(op) + ": produced non-finite values");
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  node->order = t_next_order++;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) needs = true;
      if (in.node() && in.node()->consumed) {
        throw StateError(std::string(op) + ": input belongs to a consumed graph");
      }
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw StateError("backward: undefined root");
  if (root.size() != 1) {
    throw DimensionError("backward: root must be scalar, got " + shape_to_string(root.shape()));
  }
  Node<T>* top = root.node();
  if (top->consumed) throw StateError("backward: graph already consumed");
  if (!top->requires_grad) throw StateError("backward: root does not require grad");

  // Collect every node reachable through recorded inputs.
  std::vector<Node<T>*> nodes;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{top};
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (auto& in : n->inputs) {
      if (in->requires_grad) stack.push_back(in.get());
    }
  }
  // Creation order is a topological order of the DAG.
  std::sort(nodes.begin(), nodes.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->order > b->order; });

  top->grad_buffer()[0] += T(1);
  for (Node<T>* n : nodes) {
    if (n->is_leaf()) continue;
    if (!n->grad.empty()) n->backward_fn(*n);
  }
  // Released inputs stay alive until every collected node has been visited.
  std::vector<std::shared_ptr<Node<T>>> released;
  for (Node<T>* n : nodes) {
    if (n->is_leaf()) {
      if (n->grad_sink && !n->grad.empty()) {
        if (n->grad_sink->empty()) *n->grad_sink = Tensor<T>(n->value.shape());
        *n->grad_sink += n->grad;
        n->grad = Tensor<T>();
      }
      continue;
    }
    n->consumed = true;
    n->backward_fn = nullptr;
    for (auto& in : n->inputs) released.push_back(std::move(in));
    n->inputs.clear();
    n->grad = Tensor<T>();
  }
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> make_result(const char*, Tensor<float>, std::vector<Var<float>>,
                                std::function<void(Node<float>&)>);
template Var<double> make_result(const char*, Tensor<double>, std::vector<Var<double>>,
                                 std::function<void(Node<double>&)>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace tdanet
