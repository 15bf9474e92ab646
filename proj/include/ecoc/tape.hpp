#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(*this); }
};

/// Gradients produced by one backward sweep, indexed by node.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  Gradients(const Tape<T>* tape, std::vector<std::optional<Tensor<T>>> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  /// Gradient for `v`; zeros when no path connects it to the output.
  Tensor<T> operator[](Var<T> v) const {
    if (v.tape != tape_) throw std::invalid_argument("Gradients: variable from another tape");
    const auto& g = grads_.at(v.id);
    return g ? *g : Tensor<T>(v.shape());
  }

  bool has(Var<T> v) const { return v.tape == tape_ && grads_.at(v.id).has_value(); }

 private:
  const Tape<T>* tape_ = nullptr;
  std::vector<std::optional<Tensor<T>>> grads_;
};

/// Records primitive operations in evaluation order so a backward sweep can
/// visit them in reverse. Nodes are appended only, which keeps the order
/// topological. A tape is confined to a single thread.
template <typename T>
class Tape {
 public:
  using Inputs = std::vector<const Tensor<T>*>;
  using ForwardFn = std::function<Tensor<T>(const Inputs&)>;
  /// (output gradient, input values, output value, input gradient slots). A
  /// slot is null when that input does not need a gradient; otherwise the
  /// adjoint accumulates into it.
  using BackwardFn = std::function<void(const Tensor<T>&, const Inputs&, const Tensor<T>&,
                                        std::vector<Tensor<T>*>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is wanted (inputs and trainable parameters).
  Var<T> variable(Tensor<T> value, std::string name = "leaf") {
    return push_leaf(std::move(value), true, std::move(name));
  }

  /// Leaf excluded from differentiation.
  Var<T> constant(Tensor<T> value, std::string name = "const") {
    return push_leaf(std::move(value), false, std::move(name));
  }

  Var<T> record(std::string op, std::vector<Var<T>> inputs, ForwardFn forward,
                BackwardFn backward) {
    Node node;
    node.op = std::move(op);
    node.requires_grad = false;
    for (const Var<T>& v : inputs) {
      check_owned(v, node.op);
      node.inputs.push_back(v.id);
      node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }
    node.value = forward(gather_inputs(node));
    if (!node.value.all_finite()) {
      throw NumericError("non-finite value produced by " + node.op);
    }
    node.forward = std::move(forward);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const {
    check_owned(v, "value");
    return nodes_[v.id].value;
  }

  bool requires_grad(Var<T> v) const {
    check_owned(v, "requires_grad");
    return nodes_[v.id].requires_grad;
  }

  const std::string& op_name(Var<T> v) const { return nodes_.at(v.id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

  /// Computes d(seed . output)/d(node) for every node that requires a gradient.
  Gradients<T> backward(Var<T> output, const Tensor<T>& seed) const {
    if (nodes_.empty()) throw std::logic_error("backward: tape is empty");
    check_owned(output, "backward");
    if (seed.shape() != nodes_[output.id].value.shape()) {
      throw ShapeError("backward: seed shape " + shape_str(seed.shape()) +
                       " does not match output shape " +
                       shape_str(nodes_[output.id].value.shape()));
    }
    std::vector<std::optional<Tensor<T>>> grads(output.id + 1);
    if (!nodes_[output.id].requires_grad) return Gradients<T>(this, std::move(grads));
    grads[output.id] = seed;

    for (std::size_t i = output.id + 1; i-- > 0;) {
      const Node& node = nodes_[i];
      if (!grads[i] || node.inputs.empty() || !node.requires_grad) continue;
      std::vector<Tensor<T>*> slots(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (!grads[in]) grads[in] = Tensor<T>(nodes_[in].value.shape());
        slots[k] = &*grads[in];
      }
      node.backward(*grads[i], gather_inputs(node), node.value, slots);
      for (Tensor<T>* s : slots) {
        if (s && !s->all_finite()) throw NumericError("non-finite gradient in " + node.op);
      }
    }
    return Gradients<T>(this, std::move(grads));
  }

  /// Re-runs every recorded forward function from the leaves and reports
  /// whether each node reproduces its cached value bit-for-bit.
  bool replay_matches() const {
    std::vector<Tensor<T>> fresh(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& node = nodes_[i];
      if (!node.forward) {
        fresh[i] = node.value;
        continue;
      }
      Inputs in;
      for (std::size_t id : node.inputs) in.push_back(&fresh[id]);
      fresh[i] = node.forward(in);
      if (!(fresh[i] == node.value)) return false;
    }
    return true;
  }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    ForwardFn forward;
    BackwardFn backward;
  };

  Var<T> push_leaf(Tensor<T> value, bool requires_grad, std::string name) {
    if (!value.all_finite()) throw NumericError("non-finite leaf value: " + name);
    Node node;
    node.op = std::move(name);
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  Inputs gather_inputs(const Node& node) const {
    Inputs in;
    in.reserve(node.inputs.size());
    for (std::size_t id : node.inputs) in.push_back(&nodes_[id].value);
    return in;
  }

  void check_owned(Var<T> v, const std::string& where) const {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw std::invalid_argument(where + ": variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace ecoc
