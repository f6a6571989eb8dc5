#include "scuf/tensor.hpp"

#include <stdexcept>

namespace scuf {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (!p.trainable) return constant(p.value);
  Parameter* target = &p;
  return record(p.value, true, [target](const Matrix& g) {
    if (target->grad.size() == 0) {
      target->grad = g;
    } else {
      target->grad += g;
    }
  });
}

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad,
                        requires_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  accumulate<Matrix>(v, g);
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: variable belongs to another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  if (!loss.requires_grad()) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(n.grad);
    // Intermediate gradients are not needed once propagated.
    n.grad = Matrix();
  }
}

}  // namespace scuf
