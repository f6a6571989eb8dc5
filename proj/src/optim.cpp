#include "scuf/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace scuf {

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate > 0)) throw std::invalid_argument("AdamW: learning rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void AdamW::step() {
  ++step_;
  const Real bc1 = 1.0 - std::pow(options_.beta1, static_cast<Real>(step_));
  const Real bc2 = 1.0 - std::pow(options_.beta2, static_cast<Real>(step_));
  const Real lr = options_.learning_rate;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.grad.size() == 0) continue;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseAbs2();
    p.value *= (1.0 - lr * options_.weight_decay);
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.epsilon);
  }
}

Real grad_norm(const std::vector<Parameter*>& params) {
  Real sq = 0;
  for (const Parameter* p : params) {
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

Real clip_grad_norm(const std::vector<Parameter*>& params, Real max_norm) {
  const Real norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const Real s = max_norm / (norm + 1e-6);
    for (Parameter* p : params) {
      if (p->grad.size() != 0) p->grad *= s;
    }
  }
  return norm;
}

}  // namespace scuf
