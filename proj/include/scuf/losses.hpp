#pragma once

#include "scuf/ops.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace scuf {

struct ObjectiveWeights {
  Real lambda_idt = 0.5;
  Real lambda_gan = 1.0;
};

// Named scalar losses of one training step, each already summed over the low- and normal-light branches.
struct LossReport {
  Real cycle = 0;
  Real caption = 0;
  Real reflectance = 0;
  Real identity = 0;
  Real gan_generator = 0;
  Real gan_discriminator = 0;
  Real total = 0;

  // Identity components: image L1, caption and reflectance terms.
  Real identity_image = 0;
  Real identity_caption = 0;
  Real identity_reflectance = 0;
  // Generator adversarial terms per discriminator.
  Real gan_generator_lighten = 0;
  Real gan_generator_darken = 0;
  Real grad_norm = 0;  // generator gradient norm after clipping

  static std::string csv_header();
  std::string csv_row(long step) const;
  // Throws NumericError naming the first non-finite term.
  void check_finite(long step) const;
};

// Mean absolute difference.
Var cycle_loss(const Var& reconstructed, const Var& original);
Var l1_loss(const Var& a, const Var& b);
Var mse_loss(const Var& a, const Var& b);

// 1 - mean over tokens of the cosine similarity of matching rows; zero-norm rows count as similarity 0.
Var caption_consistency_loss(const Var& feat_caption, const Var& feat_stage2);

// MSE(ref_lighten, ref_darken) + L1(ref_darken, ref_target).
Var reflectance_consistency_loss(const Var& ref_lighten, const Var& ref_darken, const Var& ref_target);

Var identity_loss(const Var& image_term, const Var& caption_term, const Var& reflectance_term);

struct GanLosses {
  Var generator;      // mean((fake - 1)^2)
  Var discriminator;  // 0.5 mean((real - 1)^2) + 0.5 mean(fake^2)
};
GanLosses gan_losses(const Var& fake_scores, const Var& real_scores);
Var gan_generator_loss(const Var& fake_scores);
Var gan_discriminator_loss(const Var& fake_scores, const Var& real_scores);

struct ObjectiveTerms {
  Var cycle, caption, reflectance, identity, gan;
};

// cycle + caption + reflectance + lambda_idt * identity + lambda_gan * gan
Var full_objective(const ObjectiveTerms& terms, const ObjectiveWeights& weights);
Real full_objective(const LossReport& report, const ObjectiveWeights& weights);

}  // namespace scuf
