#pragma once

#include "scuf/adapter.hpp"
#include "scuf/imaging.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace scuf {

enum class Direction { lighten, darken };
std::string to_string(Direction d);

struct BackboneConfig {
  int num_scales = 3;                        // encoder downsamplings; latent is H/2^num_scales
  std::vector<int> encoder_channels{16, 32, 32};
  int text_dim = 64;
  int text_vocab = 4096;
  int max_text_tokens = 16;
  int prompt_dim = 16;
  int lora_rank = 4;
  Real lora_alpha = 4.0;
  std::vector<int> reflectance_channels{16, 8};
  std::vector<int> discriminator_channels{16, 32, 32};
  std::uint64_t seed = 7;

  int latent_channels() const { return encoder_channels.back(); }
  // The UNet pools the latent once more, so full-pipeline inputs need one extra factor of two.
  int required_divisor() const { return 1 << (num_scales + 1); }
  std::string canonical() const;
};

// Pure LoRA merge: base + (alpha / r) * a * b with a: out x r, b: r x in.
template <typename DerivedW, typename DerivedA, typename DerivedB>
MatrixX<typename DerivedW::Scalar> apply_lora(const Eigen::MatrixBase<DerivedW>& base, const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b, typename DerivedW::Scalar alpha) {
  if (a.cols() != b.rows() || a.cols() < 1 || a.rows() != base.rows() || b.cols() != base.cols()) {
    throw ShapeError("apply_lora: expected a (out x r), b (r x in) with r >= 1 matching the base weight");
  }
  using Scalar = typename DerivedW::Scalar;
  return base + (alpha / static_cast<Scalar>(a.cols())) * (a * b);
}

// Differentiable LoRA merge.
Var apply_lora(const Var& base, const Var& a, const Var& b, Real alpha);

// Convolution with an optional low-rank delta on its weight.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel, int stride, std::mt19937_64& rng, int lora_rank = 0,
         Real lora_alpha = 0);

  FeatureMap forward(Tape& tape, const FeatureMap& x);
  Var effective_weight(Tape& tape);

  Parameter weight;  // out x (k*k*in)
  Parameter bias;    // 1 x out
  Parameter lora_a;  // out x r (empty without LoRA)
  Parameter lora_b;  // r x (k*k*in), zero at init
  int kernel = 3;
  int stride = 1;
  Real lora_alpha = 0;
  bool lora_enabled = true;

  bool has_lora() const { return lora_a.value.size() != 0; }
};

struct LatentStack {
  std::vector<FeatureMap> scales;  // UNet features entering each cross-attention site, coarse to fine
  FeatureMap final;
};

// Conditioning for one UNet pass. `text_tokens` carry the direction prompt or a caption;
// image-prompt tokens are optional and ordered like LatentStack::scales.
struct ConditionBundle {
  Matrix text_tokens;
  std::vector<Matrix> image_prompt_tokens;
  Direction direction = Direction::lighten;
  std::string prompt_tag;  // records which illumination map fed the pass
};

struct Encoded {
  FeatureMap latent;
  std::vector<FeatureMap> skips;  // fine to coarse: every encoder level above the latent
};

class Backbone {
 public:
  explicit Backbone(BackboneConfig config);
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;

  const BackboneConfig& config() const { return config_; }

  // Whitespace tokens hashed into a frozen table, truncated to max_text_tokens rows.
  Matrix embed_text(const std::string& prompt) const;

  std::vector<ScaleShape> unet_scales(int height, int width) const;
  std::vector<Matrix> image_prompt_tokens(const Matrix& illumination_map) const;

  static FeatureMap image_input(Tape& tape, const Image& img);
  static Image to_image(const FeatureMap& fm);

  Encoded encode(Tape& tape, const FeatureMap& img, Direction direction);
  LatentStack unet_forward(Tape& tape, const FeatureMap& latent, const ConditionBundle& cond, AdapterMode mode);
  FeatureMap decode(Tape& tape, const FeatureMap& latent, const std::vector<FeatureMap>& skips, Direction direction);
  FeatureMap reflectance_decode(Tape& tape, const FeatureMap& final_latent);
  FeatureMap discriminate(Tape& tape, const FeatureMap& img, Direction direction);

  // encode -> unet -> decode.
  FeatureMap generate(Tape& tape, const FeatureMap& img, const ConditionBundle& cond, AdapterMode mode,
                      LatentStack* stack_out = nullptr);

  void set_lora_enabled(bool enabled);
  // Base weights trainable, LoRA/adapter frozen: used to build the frozen starting point.
  void configure_pretraining();
  // Base frozen; LoRA, adapter, reflectance decoder and discriminators trainable.
  void configure_finetuning();
  // Copies lighten encoder/decoder base weights into the darken pair.
  void copy_lighten_base_to_darken();

  // Named parameter groups used for checkpoints and optimizers.
  std::vector<Parameter*> group(const std::string& name);
  static const std::vector<std::string>& group_names();
  std::vector<Parameter*> generator_trainables();
  std::vector<Parameter*> discriminator_parameters();
  std::vector<Parameter*> all_parameters();

 private:
  struct Encoder {
    std::vector<Conv2d> down;
  };
  struct Decoder {
    std::vector<Conv2d> up;  // coarse to fine, each consuming a skip
    Conv2d refine;
    Conv2d to_rgb;
  };
  struct Site {
    Parameter text_q, text_k, text_v;
    Parameter prompt_q, prompt_k, prompt_v;
  };
  struct UNet {
    Conv2d block_fine;
    Conv2d down;
    Conv2d merge;
    Site site_coarse;
    Site site_fine;
  };
  struct ReflectanceDecoder {
    std::vector<Conv2d> up;
    Conv2d to_rgb;
  };
  struct Discriminator {
    std::vector<Conv2d> layers;
  };

  Encoder& encoder(Direction d) { return d == Direction::lighten ? enc_l_ : enc_d_; }
  Decoder& decoder(Direction d) { return d == Direction::lighten ? dec_l_ : dec_d_; }
  SiteWeights bind(Tape& tape, Site& site);
  Site make_site(const std::string& name, std::mt19937_64& rng);
  Encoder make_encoder(const std::string& name, std::mt19937_64& rng);
  Decoder make_decoder(const std::string& name, std::mt19937_64& rng);
  Discriminator make_discriminator(const std::string& name, std::mt19937_64& rng);
  std::vector<Conv2d*> lora_convs();

  BackboneConfig config_;
  Parameter text_table_;
  Parameter lift_params_;  // one frozen lift row per UNet scale, coarse to fine
  Encoder enc_l_, enc_d_;
  Decoder dec_l_, dec_d_;
  UNet unet_;
  ReflectanceDecoder refl_;
  Discriminator dis_l_, dis_d_;
};

}  // namespace scuf
