#pragma once

#include "scuf/adapter.hpp"
#include "scuf/backbone.hpp"
#include "scuf/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scuf {

struct TrainerConfig {
  Real learning_rate = 1e-5;
  Real discriminator_learning_rate = 1e-5;
  Real weight_decay = 1e-2;
  Real optimizer_epsilon = 1e-8;
  Real grad_clip_max_norm = 10.0;
  int batch_size = 1;
  int crop_size = 64;
  long iterations = 500;
  Real lambda_idt = 0.5;
  Real lambda_gan = 1.0;
  AdapterMode adapter_mode = AdapterMode::cycle_attention;
  int lora_rank = 4;
  Real lora_alpha = 4.0;
  std::uint64_t seed = 7;
  std::string text_prompt_lighten = "a bright normal light photo";
  std::string text_prompt_darken = "a dark low light photo";
  bool caption_consistency = true;
  bool reflectance_consistency = true;
  long checkpoint_every = 100;
  // Autoencoder steps that build the frozen backbone before fine-tuning starts.
  long pretrain_steps = 400;
  Real pretrain_learning_rate = 3e-3;
  Real retinex_blur_sigma = 5.0;
  Real retinex_eps = 0.01;

  ObjectiveWeights weights() const { return {lambda_idt, lambda_gan}; }
  BackboneConfig backbone() const;
  // Throws ConfigError on out-of-range values.
  void validate() const;
  // One `key = value` line per field in a fixed order.
  std::string to_text() const;
  std::string hash() const;

  // Sets one field from its textual value; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Every settable key, in to_text() order.
  static std::vector<std::string> field_names();
  static TrainerConfig parse(const std::string& text, const std::string& source = "<string>");
  static TrainerConfig load(const std::filesystem::path& path);
};

}  // namespace scuf
