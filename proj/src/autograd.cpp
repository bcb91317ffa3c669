#include "touchspot/autograd.hpp"

#include <stdexcept>

namespace touchspot::ag {

Tensor& Node::grad_buffer() {
  if (grad.data.empty() && !value.data.empty()) grad = Tensor(value.shape);
  return grad;
}

Var Tape::constant(Tensor value) { return make(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  Var v = make(p.value, true, nullptr);
  v.node()->param = &p;
  return v;
}

Var Tape::make(Tensor value, bool requires_grad, std::function<void()> backward) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.back().get());
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw std::invalid_argument("Tape::backward: variable belongs to another tape");
  if (output.value().size() != 1) throw std::invalid_argument("Tape::backward: output must be a single element");
  if (!output.requires_grad()) return;
  output.node()->grad_buffer().data[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (n.backward) n.backward();
    if (n.param) {
      auto& dst = n.param->grad.data;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad.data[i];
    }
  }
}

}  // namespace touchspot::ag
