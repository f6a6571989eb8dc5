#pragma once

#include "scuf/tensor.hpp"

#include <vector>

namespace scuf {

struct AdamWOptions {
  Real learning_rate = 1e-5;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
  Real weight_decay = 1e-2;
};

// Decoupled weight decay Adam over a fixed parameter list.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);

  void zero_grad();
  void step();

  const std::vector<Parameter*>& params() const { return params_; }
  const AdamWOptions& options() const { return options_; }
  long steps() const { return step_; }

 private:
  std::vector<Parameter*> params_;
  AdamWOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long step_ = 0;
};

// Global L2 norm of the gradients in `params` (missing grads count as zero).
Real grad_norm(const std::vector<Parameter*>& params);

// Rescales gradients so their global norm is at most max_norm. Returns the norm before clipping.
Real clip_grad_norm(const std::vector<Parameter*>& params, Real max_norm);

}  // namespace scuf
