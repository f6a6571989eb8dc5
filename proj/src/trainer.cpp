#include "scuf/trainer.hpp"

#include "scuf/checkpoint.hpp"
#include "scuf/errors.hpp"
#include "scuf/hash.hpp"
#include "scuf/manifest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace scuf {
namespace {

namespace fs = std::filesystem;

Var zero(Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

void note(std::vector<ConditioningRecord>* log, const std::string& pass, const ConditionBundle& c) {
  if (log) log->push_back({pass, c.direction, c.prompt_tag});
}

ConditionBundle condition(const Matrix& text, const std::vector<Matrix>& tokens, Direction d, std::string tag) {
  return ConditionBundle{text, tokens, d, std::move(tag)};
}

ConditionBundle caption_condition(const PreparedImage& img, Direction d) {
  return ConditionBundle{img.caption_tokens, {}, d, "caption:" + img.name};
}

struct Stage {
  Encoded encoded;
  LatentStack stack;
  FeatureMap output;
};

Stage run_stage(Tape& tape, Backbone& backbone, const FeatureMap& input, const ConditionBundle& cond,
                AdapterMode mode) {
  Stage s;
  s.encoded = backbone.encode(tape, input, cond.direction);
  s.stack = backbone.unet_forward(tape, s.encoded.latent, cond, mode);
  s.output = backbone.decode(tape, s.stack.final, s.encoded.skips, cond.direction);
  return s;
}

void set_trainable(const std::vector<Parameter*>& params, bool on) {
  for (Parameter* p : params) p->trainable = on;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream) {
  return stable_hash64(std::to_string(seed) + "/" + stream);
}

PreparedImage prepare_image(Backbone& backbone, const Image& img, const std::string& caption, const std::string& name,
                            const TrainerConfig& config) {
  PreparedImage p;
  p.image = img;
  p.prompt = illumination_prompt(img);
  p.tokens_direct = backbone.image_prompt_tokens(p.prompt.v);
  p.tokens_reverse = backbone.image_prompt_tokens(p.prompt.v_reverse);
  p.caption_tokens = backbone.embed_text(caption);
  p.reflectance = retinex_decompose(img, config.retinex_blur_sigma, config.retinex_eps);
  p.name = name;
  return p;
}

PreparedPair prepare_pair(Backbone& backbone, const TrainingPair& pair, const TrainerConfig& config) {
  validate_image(pair.low, config.crop_size);
  validate_image(pair.normal, config.crop_size);
  PreparedPair p;
  p.low = prepare_image(backbone, pair.low, pair.caption_low, "I_l", config);
  p.normal = prepare_image(backbone, pair.normal, pair.caption_normal, "I_n", config);
  p.text_lighten = backbone.embed_text(config.text_prompt_lighten);
  p.text_darken = backbone.embed_text(config.text_prompt_darken);
  return p;
}

ConsistencyTerms consistency_pass(Tape& tape, Backbone& backbone, const FeatureMap& stage1_final,
                                  const FeatureMap& stage2_final, const std::optional<Var>& caption_feat,
                                  const ReflectanceTarget& target, bool use_caption, bool use_reflectance) {
  ConsistencyTerms t{zero(tape), zero(tape)};
  if (use_caption) {
    if (!caption_feat) throw std::invalid_argument("consistency_pass: caption features required");
    t.caption = caption_consistency_loss(*caption_feat, stage2_final.data);
  }
  if (use_reflectance) {
    const Var r1 = backbone.reflectance_decode(tape, stage1_final).data;
    const Var r2 = backbone.reflectance_decode(tape, stage2_final).data;
    t.reflectance = reflectance_consistency_loss(r1, r2, tape.constant(target.reflectance.pixels));
  }
  return t;
}

BranchLosses cycle_branch(Tape& tape, Backbone& backbone, const PreparedPair& pair, const TrainerConfig& config,
                          CycleState& state, std::vector<ConditioningRecord>* log) {
  const AdapterMode mode = config.adapter_mode;
  const bool cc = config.caption_consistency;
  const bool rc = config.reflectance_consistency;
  BranchLosses out;

  // I_l -> lighten with the reverse map -> darken with the direct map of I_l.
  const FeatureMap x_l = Backbone::image_input(tape, pair.low.image);
  const ConditionBundle c1 = condition(pair.text_lighten, pair.low.tokens_reverse, Direction::lighten, "I_l:reverse");
  note(log, "cycle_low.stage1", c1);
  Stage s1 = run_stage(tape, backbone, x_l, c1, mode);
  const ConditionBundle c2 = condition(pair.text_darken, pair.low.tokens_direct, Direction::darken, "I_l:direct");
  note(log, "cycle_low.stage2", c2);
  Stage s2 = run_stage(tape, backbone, s1.output, c2, mode);
  state.generated_normal = s1.output;
  state.reconstructed_low = s2.output;
  state.low_stage1 = s1.stack;
  state.low_stage2 = s2.stack;
  if (cc) {
    const ConditionBundle cap = caption_condition(pair.low, Direction::lighten);
    note(log, "cycle_low.caption", cap);
    state.caption_low = backbone.unet_forward(tape, s1.encoded.latent, cap, mode).final.data;
  }
  ConsistencyTerms t_l = consistency_pass(tape, backbone, s1.stack.final, s2.stack.final, state.caption_low,
                                          pair.low.reflectance, cc, rc);
  out.cycle_low = cycle_loss(s2.output.data, x_l.data);

  // I_n -> darken with the reverse map -> lighten with the direct map of I_n.
  const FeatureMap x_n = Backbone::image_input(tape, pair.normal.image);
  const ConditionBundle c3 = condition(pair.text_darken, pair.normal.tokens_reverse, Direction::darken, "I_n:reverse");
  note(log, "cycle_normal.stage1", c3);
  Stage s3 = run_stage(tape, backbone, x_n, c3, mode);
  const ConditionBundle c4 = condition(pair.text_lighten, pair.normal.tokens_direct, Direction::lighten, "I_n:direct");
  note(log, "cycle_normal.stage2", c4);
  Stage s4 = run_stage(tape, backbone, s3.output, c4, mode);
  state.generated_low = s3.output;
  state.reconstructed_normal = s4.output;
  state.normal_stage1 = s3.stack;
  state.normal_stage2 = s4.stack;
  if (cc) {
    const ConditionBundle cap = caption_condition(pair.normal, Direction::darken);
    note(log, "cycle_normal.caption", cap);
    state.caption_normal = backbone.unet_forward(tape, s3.encoded.latent, cap, mode).final.data;
  }
  ConsistencyTerms t_n = consistency_pass(tape, backbone, s3.stack.final, s4.stack.final, state.caption_normal,
                                          pair.normal.reflectance, cc, rc);
  out.cycle_normal = cycle_loss(s4.output.data, x_n.data);

  out.caption_low = t_l.caption;
  out.caption_normal = t_n.caption;
  out.reflectance_low = t_l.reflectance;
  out.reflectance_normal = t_n.reflectance;
  out.cycle = ops::add(out.cycle_low, out.cycle_normal);
  out.caption = ops::add(t_l.caption, t_n.caption);
  out.reflectance = ops::add(t_l.reflectance, t_n.reflectance);
  return out;
}

IdentityLosses identity_branch(Tape& tape, Backbone& backbone, const PreparedPair& pair, const TrainerConfig& config,
                               CycleState& state, std::vector<ConditioningRecord>* log) {
  const AdapterMode mode = config.adapter_mode;
  const bool cc = config.caption_consistency;
  const bool rc = config.reflectance_consistency;
  IdentityLosses out;

  // The darkener should leave I_l unchanged; the lightener should leave I_n unchanged.
  const FeatureMap x_l = Backbone::image_input(tape, pair.low.image);
  const ConditionBundle cl = condition(pair.text_darken, pair.low.tokens_direct, Direction::darken, "I_l:direct");
  note(log, "identity_low", cl);
  Stage sl = run_stage(tape, backbone, x_l, cl, mode);

  const FeatureMap x_n = Backbone::image_input(tape, pair.normal.image);
  const ConditionBundle cn = condition(pair.text_lighten, pair.normal.tokens_direct, Direction::lighten, "I_n:direct");
  note(log, "identity_normal", cn);
  Stage sn = run_stage(tape, backbone, x_n, cn, mode);

  out.identity_low = sl.output;
  out.identity_normal = sn.output;
  out.image = ops::add(l1_loss(sl.output.data, x_l.data), l1_loss(sn.output.data, x_n.data));

  out.caption = zero(tape);
  if (cc) {
    // Reuses the caption-conditioned features of the stage-1 encodings when the cycle branch ran first.
    if (!state.caption_low) {
      const ConditionBundle cap = caption_condition(pair.low, Direction::lighten);
      note(log, "identity_low.caption", cap);
      state.caption_low =
          backbone.unet_forward(tape, backbone.encode(tape, x_l, Direction::lighten).latent, cap, mode).final.data;
    }
    if (!state.caption_normal) {
      const ConditionBundle cap = caption_condition(pair.normal, Direction::darken);
      note(log, "identity_normal.caption", cap);
      state.caption_normal =
          backbone.unet_forward(tape, backbone.encode(tape, x_n, Direction::darken).latent, cap, mode).final.data;
    }
    out.caption = ops::add(caption_consistency_loss(*state.caption_low, sl.stack.final.data),
                           caption_consistency_loss(*state.caption_normal, sn.stack.final.data));
  }
  out.reflectance = zero(tape);
  if (rc) {
    const Var rl = backbone.reflectance_decode(tape, sl.stack.final).data;
    const Var rn = backbone.reflectance_decode(tape, sn.stack.final).data;
    out.reflectance = ops::add(l1_loss(rl, tape.constant(pair.low.reflectance.reflectance.pixels)),
                               l1_loss(rn, tape.constant(pair.normal.reflectance.reflectance.pixels)));
  }
  out.total = identity_loss(out.image, out.caption, out.reflectance);
  return out;
}

DiscriminatorLosses discriminator_branch(Tape& tape, Backbone& backbone, const Image& fake_normal,
                                         const Image& fake_low, const Image& real_normal, const Image& real_low) {
  DiscriminatorLosses out;
  const Var fl = backbone.discriminate(tape, Backbone::image_input(tape, fake_normal), Direction::lighten).data;
  const Var rl = backbone.discriminate(tape, Backbone::image_input(tape, real_normal), Direction::lighten).data;
  const Var fd = backbone.discriminate(tape, Backbone::image_input(tape, fake_low), Direction::darken).data;
  const Var rd = backbone.discriminate(tape, Backbone::image_input(tape, real_low), Direction::darken).data;
  out.lighten = gan_discriminator_loss(fl, rl);
  out.darken = gan_discriminator_loss(fd, rd);
  out.total = ops::add(out.lighten, out.darken);
  return out;
}

std::vector<Real> pretrain_backbone(Backbone& backbone, const UnpairedDataset& data, const TrainerConfig& config) {
  std::vector<Real> losses;
  backbone.configure_pretraining();
  std::vector<Parameter*> params;
  for (Parameter* p : backbone.group("base")) {
    if (p->trainable) params.push_back(p);
  }
  AdamW opt(params, AdamWOptions{config.pretrain_learning_rate, 0.9, 0.999, config.optimizer_epsilon, 0.0});
  std::mt19937_64 rng(derive_seed(config.seed, "pretrain"));
  const std::vector<std::string> prompts{config.text_prompt_lighten, config.text_prompt_darken, kFallbackCaption};
  std::bernoulli_distribution pick_low(0.5);
  for (long step = 0; step < config.pretrain_steps; ++step) {
    const auto& pool = pick_low(rng) ? data.low : data.normal;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const Sample& s = pool[pick(rng)];
    const Image img = augment(s.image, config.crop_size, rng);
    std::uniform_int_distribution<std::size_t> pick_prompt(0, prompts.size());
    const std::size_t k = pick_prompt(rng);
    const std::string& text = k < prompts.size() ? prompts[k] : s.caption;

    Tape tape;
    const FeatureMap x = Backbone::image_input(tape, img);
    const ConditionBundle cond{backbone.embed_text(text), {}, Direction::lighten, "pretrain"};
    const FeatureMap y = backbone.generate(tape, x, cond, AdapterMode::text_only);
    const Var loss = l1_loss(y.data, x.data);
    opt.zero_grad();
    tape.backward(loss);
    clip_grad_norm(params, config.grad_clip_max_norm);
    opt.step();
    losses.push_back(loss.item());
    if (!std::isfinite(losses.back())) throw NumericError(step, "pretrain");
  }
  backbone.copy_lighten_base_to_darken();
  backbone.configure_finetuning();
  return losses;
}

Trainer::Trainer(Backbone& backbone, const UnpairedDataset& data, TrainerConfig config)
    : backbone_(backbone),
      data_(data),
      config_(std::move(config)),
      generator_opt_((backbone.configure_finetuning(), backbone.generator_trainables()),
                     AdamWOptions{config_.learning_rate, 0.9, 0.999, config_.optimizer_epsilon, config_.weight_decay}),
      discriminator_opt_(backbone.discriminator_parameters(),
                         AdamWOptions{config_.discriminator_learning_rate, 0.5, 0.999, config_.optimizer_epsilon,
                                      config_.weight_decay}),
      data_rng_(derive_seed(config_.seed, "data")) {
  config_.validate();
  data_.validate();
}

LossReport Trainer::step() { return step(sample_pair(data_, config_.crop_size, data_rng_)); }

LossReport Trainer::step(const TrainingPair& pair) {
  const PreparedPair prepared = prepare_pair(backbone_, pair, config_);
  conditioning_.clear();
  LossReport report;

  // Generator update; discriminator weights act as constants here.
  set_trainable(discriminator_opt_.params(), false);
  Image fake_normal, fake_low;
  {
    Tape tape;
    CycleState state;
    BranchLosses cyc = cycle_branch(tape, backbone_, prepared, config_, state, &conditioning_);
    IdentityLosses idt = identity_branch(tape, backbone_, prepared, config_, state, &conditioning_);
    const Var gan_l = gan_generator_loss(backbone_.discriminate(tape, state.generated_normal, Direction::lighten).data);
    const Var gan_d = gan_generator_loss(backbone_.discriminate(tape, state.generated_low, Direction::darken).data);
    const Var gan = ops::add(gan_l, gan_d);
    const Var total = full_objective({cyc.cycle, cyc.caption, cyc.reflectance, idt.total, gan}, config_.weights());

    report.cycle = cyc.cycle.item();
    report.caption = cyc.caption.item();
    report.reflectance = cyc.reflectance.item();
    report.identity = idt.total.item();
    report.identity_image = idt.image.item();
    report.identity_caption = idt.caption.item();
    report.identity_reflectance = idt.reflectance.item();
    report.gan_generator = gan.item();
    report.gan_generator_lighten = gan_l.item();
    report.gan_generator_darken = gan_d.item();
    report.total = total.item();
    report.check_finite(iteration_);

    generator_opt_.zero_grad();
    tape.backward(total);
    clip_grad_norm(generator_opt_.params(), config_.grad_clip_max_norm);
    report.grad_norm = grad_norm(generator_opt_.params());
    if (!std::isfinite(report.grad_norm)) throw NumericError(iteration_, "grad_norm");
    generator_opt_.step();

    fake_normal = Backbone::to_image(state.generated_normal);
    fake_low = Backbone::to_image(state.generated_low);
  }
  set_trainable(discriminator_opt_.params(), true);

  // Discriminator update on detached fakes.
  {
    Tape tape;
    DiscriminatorLosses d = discriminator_branch(tape, backbone_, fake_normal, fake_low, prepared.normal.image,
                                                 prepared.low.image);
    report.gan_discriminator = d.total.item();
    if (!std::isfinite(report.gan_discriminator)) throw NumericError(iteration_, "gan_discriminator");
    discriminator_opt_.zero_grad();
    tape.backward(d.total);
    clip_grad_norm(discriminator_opt_.params(), config_.grad_clip_max_norm);
    discriminator_opt_.step();
  }
  ++iteration_;
  return report;
}

TrainResult train(const TrainerConfig& config, const UnpairedDataset& data, const fs::path& out_dir,
                  Backbone* backbone_in, const StepCallback& on_step, const std::string& command_line) {
  config.validate();
  data.validate();
  fs::create_directories(out_dir);
  std::unique_ptr<Backbone> owned;
  Backbone* backbone = backbone_in;
  if (!backbone) {
    owned = std::make_unique<Backbone>(config.backbone());
    backbone = owned.get();
  } else if (backbone_config_hash(backbone->config()) != backbone_config_hash(config.backbone())) {
    throw ConfigError("train: supplied backbone does not match the trainer config");
  }

  RunManifest manifest;
  manifest.command_line = command_line;
  manifest.config_hash = config.hash();
  manifest.seed = config.seed;
  manifest.dataset_fingerprints = {{"low", data.fingerprint_low()}, {"normal", data.fingerprint_normal()}};
  manifest.extra["adapter_mode"] = to_string(config.adapter_mode);
  manifest.extra["update_order"] = "generator_then_discriminator";
  const fs::path manifest_path = out_dir / "run_manifest.json";
  manifest.start(manifest_path);
  {
    std::ofstream cfg(out_dir / "config.cfg");
    cfg << config.to_text();
  }

  TrainResult result;
  result.trace_path = out_dir / "loss_trace.csv";
  try {
    result.pretrain_losses = pretrain_backbone(*backbone, data, config);
    Trainer trainer(*backbone, data, config);
    std::ofstream trace(result.trace_path, std::ios::trunc);
    trace << LossReport::csv_header() << '\n';
    for (long step = 0; step < config.iterations; ++step) {
      LossReport r = trainer.step();
      trace << r.csv_row(step) << '\n';
      trace.flush();
      result.trace.push_back(r);
      if (on_step) on_step(step, r);
      if ((step + 1) % config.checkpoint_every == 0 && step + 1 < config.iterations) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%06ld", step + 1);
        save_checkpoint(*backbone, out_dir / "checkpoints" / name, config, step + 1);
      }
    }
    result.final_checkpoint = out_dir / "checkpoints" / "final";
    save_checkpoint(*backbone, result.final_checkpoint, config, config.iterations);
  } catch (const NumericError& e) {
    manifest.extra["error"] = e.what();
    manifest.finish(manifest_path, "numeric_failure");
    throw;
  } catch (const std::exception& e) {
    manifest.extra["error"] = e.what();
    manifest.finish(manifest_path, "failed");
    throw;
  }
  manifest.extra["final_checkpoint"] = result.final_checkpoint.string();
  manifest.finish(manifest_path, "completed");
  return result;
}

}  // namespace scuf
