#pragma once

#include "scuf/backbone.hpp"
#include "scuf/config.hpp"
#include "scuf/data.hpp"
#include "scuf/losses.hpp"
#include "scuf/optim.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace scuf {

// Per-image quantities shared by every branch of a step.
struct PreparedImage {
  Image image;
  IlluminationPrompt prompt;
  std::vector<Matrix> tokens_direct;   // from v
  std::vector<Matrix> tokens_reverse;  // from 1 - v
  Matrix caption_tokens;
  ReflectanceTarget reflectance;
  std::string name;  // "I_l" or "I_n"
};

struct PreparedPair {
  PreparedImage low;
  PreparedImage normal;
  Matrix text_lighten;
  Matrix text_darken;
};

PreparedImage prepare_image(Backbone& backbone, const Image& img, const std::string& caption, const std::string& name,
                            const TrainerConfig& config);
PreparedPair prepare_pair(Backbone& backbone, const TrainingPair& pair, const TrainerConfig& config);

// Which illumination map fed one UNet pass.
struct ConditioningRecord {
  std::string pass;
  Direction direction;
  std::string prompt_tag;  // "<image>:direct", "<image>:reverse" or "caption:<image>"
};

// Tape handles produced by one step, kept for loss assembly and inspection.
struct CycleState {
  FeatureMap generated_normal;      // lighten(I_l)
  FeatureMap reconstructed_low;     // darken(lighten(I_l))
  FeatureMap generated_low;         // darken(I_n)
  FeatureMap reconstructed_normal;  // lighten(darken(I_n))
  LatentStack low_stage1, low_stage2;        // Z_l, Z_d of the I_l cycle
  LatentStack normal_stage1, normal_stage2;  // Z_d, Z_l of the I_n cycle
  std::optional<Var> caption_low;     // U(E_l(I_l), Cap_l)
  std::optional<Var> caption_normal;  // U(E_d(I_n), Cap_n)
};

struct BranchLosses {
  Var cycle;        // L1 summed over both cycles
  Var caption;      // zero when caption consistency is off
  Var reflectance;  // zero when reflectance consistency is off
  Var cycle_low, cycle_normal;
  Var caption_low, caption_normal;
  Var reflectance_low, reflectance_normal;
};

struct ConsistencyTerms {
  Var caption;
  Var reflectance;
};

// Caption and reflectance consistency for one cycle. `caption_feat` is the caption-conditioned
// UNet output on the stage-1 encoding; stage features are the UNet final latents.
ConsistencyTerms consistency_pass(Tape& tape, Backbone& backbone, const FeatureMap& stage1_final,
                                  const FeatureMap& stage2_final, const std::optional<Var>& caption_feat,
                                  const ReflectanceTarget& target, bool use_caption, bool use_reflectance);

// Both cycles of the low/normal pair.
BranchLosses cycle_branch(Tape& tape, Backbone& backbone, const PreparedPair& pair, const TrainerConfig& config,
                          CycleState& state, std::vector<ConditioningRecord>* log = nullptr);

struct IdentityLosses {
  Var total;  // image + caption + reflectance
  Var image;
  Var caption;
  Var reflectance;
  FeatureMap identity_low;     // darken(I_l)
  FeatureMap identity_normal;  // lighten(I_n)
};

IdentityLosses identity_branch(Tape& tape, Backbone& backbone, const PreparedPair& pair, const TrainerConfig& config,
                               CycleState& state, std::vector<ConditioningRecord>* log = nullptr);

struct DiscriminatorLosses {
  Var total;
  Var lighten;
  Var darken;
};

// Least-squares losses for both discriminators on detached fakes and the real inputs.
DiscriminatorLosses discriminator_branch(Tape& tape, Backbone& backbone, const Image& fake_normal,
                                         const Image& fake_low, const Image& real_normal, const Image& real_low);

// Trains base encoder/UNet/decoder weights as a text-conditioned autoencoder, then copies the
// lighten pair into the darken pair. Leaves the backbone configured for fine-tuning.
std::vector<Real> pretrain_backbone(Backbone& backbone, const UnpairedDataset& data, const TrainerConfig& config);

// Owns optimizer state and the data stream of one fine-tuning run.
class Trainer {
 public:
  Trainer(Backbone& backbone, const UnpairedDataset& data, TrainerConfig config);

  // One iteration: cycle, identity, generator update, discriminator update.
  LossReport step();
  // Same as step() on an explicit pair.
  LossReport step(const TrainingPair& pair);

  long iteration() const { return iteration_; }
  const std::vector<ConditioningRecord>& last_conditioning() const { return conditioning_; }
  const TrainerConfig& config() const { return config_; }
  std::mt19937_64& data_rng() { return data_rng_; }

 private:
  Backbone& backbone_;
  const UnpairedDataset& data_;
  TrainerConfig config_;
  AdamW generator_opt_;
  AdamW discriminator_opt_;
  std::mt19937_64 data_rng_;
  long iteration_ = 0;
  std::vector<ConditioningRecord> conditioning_;
};

struct TrainResult {
  std::vector<LossReport> trace;
  std::filesystem::path final_checkpoint;
  std::filesystem::path trace_path;
  std::vector<Real> pretrain_losses;
};

using StepCallback = std::function<void(long step, const LossReport&)>;

// Full run: pretraining, `iterations` fine-tuning steps, CSV trace, periodic and final checkpoints,
// and a run manifest in out_dir. Deterministic for a fixed config and dataset.
TrainResult train(const TrainerConfig& config, const UnpairedDataset& data, const std::filesystem::path& out_dir,
                  Backbone* backbone_out = nullptr, const StepCallback& on_step = {},
                  const std::string& command_line = "train");

// Derives an independent RNG seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& stream);

}  // namespace scuf
