#pragma once

// Minimal tape-based reverse-mode differentiation over Tensor values. Nodes are
// appended in evaluation order, so reverse iteration is a valid topological order.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "touchspot/tensor.hpp"

namespace touchspot::ag {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string name_, Tensor value_) : name(std::move(name_)), value(std::move(value_)) {
    grad = Tensor(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by accumulate()
  bool requires_grad = false;
  Parameter* param = nullptr;
  std::function<void()> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;

  const Tensor& value() const { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_->requires_grad; }
  Tape* tape() const { return tape_; }
  Node* node() const { return node_; }
  bool valid() const { return node_ != nullptr; }
  // Gradient after Tape::backward; empty when the node received none.
  const Tensor& grad() const { return node_->grad; }

 private:
  friend class Tape;
  Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);
  // Low-level node creation used by the op library.
  Var make(Tensor value, bool requires_grad, std::function<void()> backward);

  // Seeds d(output)/d(output) = 1 for a single-element output, propagates, and
  // adds the result into every Parameter::grad reached.
  void backward(const Var& output);

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace touchspot::ag
