#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "d2a2/tensor.hpp"

namespace d2a2 {

/// Named trainable tensor with its gradient and Adam state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> moment1;
  Tensor<T> moment2;
  std::int64_t step = 0;

  Parameter(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(shape), moment1(shape), moment2(shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Owning, insertion-ordered collection of uniquely named parameters.
/// Addresses of stored parameters are stable for the lifetime of the set.
template <typename T>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Shape shape) {
    if (index_.count(name) != 0) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Parameter<T>>(name, shape));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t numel() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p->value.size();
    return total;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

template <typename T>
struct Node {
  using Backward = std::function<void(const Tensor<T>& grad_out)>;

  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  Parameter<T>* param = nullptr;
  Backward backward;

  /// Zero-initialized on first touch.
  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size() || grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::shared_ptr<Node<T>> node) : tape_(tape), node_(std::move(node)) {}

  explicit operator bool() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient accumulated by the last backward pass (zeros if none reached this node).
  const Tensor<T>& grad() const { return node_->grad_buffer(); }

  Tape<T>* tape() const { return tape_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::shared_ptr<Node<T>> node_;
};

/// Records operations in execution order and replays their backward rules
/// in reverse. One tape serves one forward/backward pass and is not shared
/// between threads.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// With recording off no graph is retained; intermediates die with their Vars.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  Var<T> input(Tensor<T> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad && recording_;
    if (node->requires_grad) nodes_.push_back(node);
    return Var<T>(this, std::move(node));
  }

  Var<T> constant(Tensor<T> value) { return input(std::move(value), false); }

  /// Leaf bound to a parameter; backward adds the leaf gradient into param.grad.
  Var<T> param(Parameter<T>& p) {
    auto node = std::make_shared<Node<T>>();
    node->value = p.value;
    node->requires_grad = recording_;
    node->param = &p;
    if (node->requires_grad) nodes_.push_back(node);
    return Var<T>(this, std::move(node));
  }

  /// Records the result of an operation. The backward rule is retained only if
  /// some input requires a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                typename Node<T>::Backward backward) {
    bool needs = false;
    for (const Var<T>* in : inputs) {
      if (in->tape() != this) throw std::logic_error("operation mixes values from different tapes");
      needs = needs || in->requires_grad();
    }
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = recording_ && needs;
    if (node->requires_grad) {
      node->backward = std::move(backward);
      nodes_.push_back(node);
    }
    return Var<T>(this, std::move(node));
  }

  /// Reverse sweep seeded with d(root)/d(root) = 1; root must be a scalar.
  void backward(const Var<T>& root) {
    if (root.value().size() != 1) throw ShapeError("backward root must be a scalar");
    Tensor<T> seed(root.shape(), T(1));
    backward(root, seed);
  }

  void backward(const Var<T>& root, const Tensor<T>& seed) {
    require_same_shape(root.shape(), seed.shape(), "backward seed");
    if (!root.requires_grad()) return;
    auto& g = root.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& node = **it;
      if (node.grad.empty()) continue;
      if (node.backward) node.backward(node.grad);
      if (node.param != nullptr) {
        auto& pg = node.param->grad;
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += node.grad[i];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  bool recording_ = true;
  std::vector<std::shared_ptr<Node<T>>> nodes_;
};

}  // namespace d2a2
