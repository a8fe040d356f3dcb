#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "msdc/tensor.hpp"

namespace msdc {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  /// Reads this->grad and accumulates into parents' gradients. Absent
  /// operands keep their slot in `parents` as nullptr.
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }

  /// Gradient accumulator of parent i, or nullptr when it needs none.
  Tensor<T>* parent_grad(std::size_t i) {
    Node* p = parents[i].get();
    return (p && p->requires_grad) ? &p->grad_buffer() : nullptr;
  }
  const Tensor<T>& parent_value(std::size_t i) const { return parents[i]->value; }
};

/// Handle to a value in the recorded computation graph. A default-constructed
/// Var is "absent" (used for optional operands such as a missing bias).
template <typename T>
class Var {
 public:
  using BackwardFn = std::function<void(Node<T>&)>;

  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad_buffer();
  }

  /// Output of a differentiable operation. The backward rule is kept only when
  /// recording is enabled and some parent needs a gradient.
  static Var from_op(Tensor<T> value, std::vector<Var> parents, BackwardFn backward) {
    Var out;
    out.node_ = std::make_shared<Node<T>>();
    out.node_->value = std::move(value);
    if (!grad_enabled()) return out;
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
    if (!needs) return out;
    out.node_->requires_grad = true;
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  /// Accumulated gradient; empty tensor when nothing has flowed here.
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_->requires_grad) node_->grad_buffer().fill(T(0));
  }

  Node<T>* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Reverse pass from `root`, seeded with `seed` (ones when omitted, which
/// requires a single-element root). Leaf gradients accumulate; intermediate
/// gradients are released once propagated.
template <typename T>
void backward(const Var<T>& root, std::optional<Tensor<T>> seed = std::nullopt) {
  if (!root.requires_grad()) return;
  Node<T>* start = root.node();
  if (seed) {
    if (seed->shape() != start->value.shape()) {
      throw ShapeError("backward seed " + shape_str(seed->shape()) + " does not match root " +
                       shape_str(start->value.shape()));
    }
  } else if (start->value.size() != 1) {
    throw ShapeError("backward without seed needs a scalar root, got " + shape_str(start->value.shape()));
  }

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{start, 0}};
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor<T>& g = start->grad_buffer();
  if (seed) {
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += (*seed)[i];
  } else {
    g[0] += T(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward) continue;
    if (!node->grad.empty()) node->backward(*node);
    node->grad = Tensor<T>();
  }
}

/// Learnable tensor with a unique name. Its gradient always has the value's shape.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;

  const Tensor<T>& value() const { return var.value(); }
  Tensor<T>& mutable_value() { return var.mutable_value(); }
  const Tensor<T>& grad() const { return var.node()->grad_buffer(); }
  Tensor<T>& mutable_grad() { return var.node()->grad_buffer(); }
};

/// Ordered learnable parameters plus named non-learnable buffers
/// (batch-norm running statistics).
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name) || buffer_index_.count(name)) {
      throw std::invalid_argument("duplicate parameter name '" + name + "'");
    }
    index_[name] = params_.size();
    params_.push_back(Parameter<T>{name, Var<T>(std::move(value), true)});
    return params_.back();
  }

  Tensor<T>& add_buffer(const std::string& name, Tensor<T> value) {
    if (index_.count(name) || buffer_index_.count(name)) {
      throw std::invalid_argument("duplicate buffer name '" + name + "'");
    }
    buffer_index_[name] = buffers_.size();
    buffers_.emplace_back(name, std::move(value));
    return buffers_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Parameter<T>& at(const std::string& name) { return params_[lookup(index_, name, "parameter")]; }
  const Parameter<T>& at(const std::string& name) const { return params_[lookup(index_, name, "parameter")]; }
  Tensor<T>& buffer(const std::string& name) { return buffers_[lookup(buffer_index_, name, "buffer")].second; }
  const Tensor<T>& buffer(const std::string& name) const {
    return buffers_[lookup(buffer_index_, name, "buffer")].second;
  }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor<T>>>& buffers() { return buffers_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }
  std::size_t size() const { return params_.size(); }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  /// Fresh leaves with copied values and zero gradients; no graph state is shared.
  ParamSet clone() const {
    ParamSet out;
    for (const auto& p : params_) out.add(p.name, p.value());
    for (const auto& [name, value] : buffers_) out.add_buffer(name, value);
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value().template cast<U>());
    for (const auto& [name, value] : buffers_) out.add_buffer(name, value.template cast<U>());
    return out;
  }

  /// Rebinds parameter i to an externally created leaf (gradient checking).
  void rebind(std::size_t i, Var<T> var) {
    if (var.shape() != params_.at(i).value().shape()) {
      throw ShapeError("rebind of '" + params_[i].name + "' with shape " + shape_str(var.shape()));
    }
    params_[i].var = std::move(var);
  }

 private:
  static std::size_t lookup(const std::unordered_map<std::string, std::size_t>& idx, const std::string& name,
                            const char* what) {
    auto it = idx.find(name);
    if (it == idx.end()) throw std::out_of_range(std::string("unknown ") + what + " '" + name + "'");
    return it->second;
  }

  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
  std::unordered_map<std::string, std::size_t> buffer_index_;
};

}  // namespace msdc
