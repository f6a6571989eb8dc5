#include "scuf/losses.hpp"

#include "scuf/errors.hpp"

#include <cmath>
#include <cstdio>

namespace scuf {
namespace {

void require_same(const Var& a, const Var& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": operands differ in shape (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                     ")");
  }
}

}  // namespace

std::string LossReport::csv_header() {
  return "step,cycle,caption,reflectance,identity,gan_generator,gan_discriminator,total,"
         "identity_image,identity_caption,identity_reflectance,gan_generator_lighten,gan_generator_darken,grad_norm";
}

std::string LossReport::csv_row(long step) const {
  char buf[640];
  std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                step, cycle, caption, reflectance, identity, gan_generator, gan_discriminator, total, identity_image,
                identity_caption, identity_reflectance, gan_generator_lighten, gan_generator_darken, grad_norm);
  return buf;
}

void LossReport::check_finite(long step) const {
  const std::pair<const char*, Real> terms[] = {
      {"cycle", cycle},         {"caption", caption},
      {"reflectance", reflectance}, {"identity", identity},
      {"gan_generator", gan_generator}, {"gan_discriminator", gan_discriminator},
      {"total", total},         {"grad_norm", grad_norm}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericError(step, name);
  }
}

Var l1_loss(const Var& a, const Var& b) {
  require_same(a, b, "l1_loss");
  return ops::mean(ops::abs(ops::sub(a, b)));
}

Var mse_loss(const Var& a, const Var& b) {
  require_same(a, b, "mse_loss");
  return ops::mean(ops::square(ops::sub(a, b)));
}

Var cycle_loss(const Var& reconstructed, const Var& original) {
  require_same(reconstructed, original, "cycle_loss");
  return l1_loss(reconstructed, original);
}

Var caption_consistency_loss(const Var& feat_caption, const Var& feat_stage2) {
  require_same(feat_caption, feat_stage2, "caption_consistency_loss");
  return ops::add_scalar(ops::scale(ops::mean_row_cosine(feat_caption, feat_stage2), -1.0), 1.0);
}

Var reflectance_consistency_loss(const Var& ref_lighten, const Var& ref_darken, const Var& ref_target) {
  require_same(ref_lighten, ref_darken, "reflectance_consistency_loss");
  require_same(ref_darken, ref_target, "reflectance_consistency_loss");
  return ops::add(mse_loss(ref_lighten, ref_darken), l1_loss(ref_darken, ref_target));
}

Var identity_loss(const Var& image_term, const Var& caption_term, const Var& reflectance_term) {
  return ops::add(ops::add(image_term, caption_term), reflectance_term);
}

Var gan_generator_loss(const Var& fake_scores) { return ops::mean(ops::square(ops::add_scalar(fake_scores, -1.0))); }

Var gan_discriminator_loss(const Var& fake_scores, const Var& real_scores) {
  const Var real_term = ops::mean(ops::square(ops::add_scalar(real_scores, -1.0)));
  const Var fake_term = ops::mean(ops::square(fake_scores));
  return ops::scale(ops::add(real_term, fake_term), 0.5);
}

GanLosses gan_losses(const Var& fake_scores, const Var& real_scores) {
  return {gan_generator_loss(fake_scores), gan_discriminator_loss(fake_scores, real_scores)};
}

Var full_objective(const ObjectiveTerms& t, const ObjectiveWeights& w) {
  Var total = ops::add(ops::add(t.cycle, t.caption), t.reflectance);
  total = ops::add(total, ops::scale(t.identity, w.lambda_idt));
  return ops::add(total, ops::scale(t.gan, w.lambda_gan));
}

Real full_objective(const LossReport& r, const ObjectiveWeights& w) {
  return r.cycle + r.caption + r.reflectance + w.lambda_idt * r.identity + w.lambda_gan * r.gan_generator;
}

}  // namespace scuf
