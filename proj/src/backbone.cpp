#include "scuf/backbone.hpp"

#include "scuf/hash.hpp"

#include <cmath>
#include <sstream>

namespace scuf {
namespace {

constexpr Real kLeak = 0.2;

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, Real stddev, std::mt19937_64& rng) {
  std::normal_distribution<Real> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

FeatureMap act(const FeatureMap& x) { return {ops::leaky_relu(x.data, kLeak), x.height, x.width}; }

FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("skip connection " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                     " does not match decoder feature " + std::to_string(a.height) + "x" + std::to_string(a.width));
  }
  return {ops::concat_cols(a.data, b.data), a.height, a.width};
}

}  // namespace

std::string to_string(Direction d) { return d == Direction::lighten ? "lighten" : "darken"; }

std::string BackboneConfig::canonical() const {
  std::ostringstream os;
  os << "num_scales=" << num_scales << ";encoder=";
  for (int c : encoder_channels) os << c << ',';
  os << ";text_dim=" << text_dim << ";vocab=" << text_vocab << ";max_tokens=" << max_text_tokens
     << ";prompt_dim=" << prompt_dim << ";lora_rank=" << lora_rank << ";lora_alpha=" << lora_alpha << ";refl=";
  for (int c : reflectance_channels) os << c << ',';
  os << ";disc=";
  for (int c : discriminator_channels) os << c << ',';
  os << ";seed=" << seed;
  return os.str();
}

Var apply_lora(const Var& base, const Var& a, const Var& b, Real alpha) {
  if (a.cols() != b.rows() || a.cols() < 1 || a.rows() != base.rows() || b.cols() != base.cols()) {
    throw ShapeError("apply_lora: expected a (out x r), b (r x in) with r >= 1 matching the base weight");
  }
  return ops::add(base, ops::scale(ops::matmul(a, b), alpha / static_cast<Real>(a.cols())));
}

Conv2d::Conv2d(const std::string& name, int in, int out, int k, int s, std::mt19937_64& rng, int lora_rank,
               Real alpha)
    : kernel(k), stride(s), lora_alpha(alpha) {
  const int fan_in = k * k * in;
  weight = Parameter(name + ".weight", random_normal(out, fan_in, std::sqrt(2.0 / fan_in), rng));
  bias = Parameter(name + ".bias", Matrix::Zero(1, out));
  if (lora_rank > 0) {
    lora_a = Parameter(name + ".lora_a", random_normal(out, lora_rank, 1.0 / std::sqrt(Real(lora_rank)), rng));
    lora_b = Parameter(name + ".lora_b", Matrix::Zero(lora_rank, fan_in));
  }
}

Var Conv2d::effective_weight(Tape& tape) {
  Var w = tape.param(weight);
  if (!has_lora() || !lora_enabled) return w;
  return apply_lora(w, tape.param(lora_a), tape.param(lora_b), lora_alpha);
}

FeatureMap Conv2d::forward(Tape& tape, const FeatureMap& x) {
  return ops::conv2d(x, effective_weight(tape), tape.param(bias), kernel, stride);
}

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
  if (config_.num_scales < 2 || static_cast<int>(config_.encoder_channels.size()) != config_.num_scales) {
    throw ConfigError("backbone: need at least two scales and one encoder width per scale");
  }
  if (config_.lora_rank < 1) throw ConfigError("backbone: lora_rank must be >= 1");
  std::mt19937_64 rng(config_.seed);
  text_table_ = Parameter("text.table", random_normal(config_.text_vocab, config_.text_dim, 1.0, rng));
  lift_params_ = Parameter("prompt.lift", random_normal(2, config_.prompt_dim, 1.0, rng));
  enc_l_ = make_encoder("enc_l", rng);
  enc_d_ = make_encoder("enc_d", rng);
  dec_l_ = make_decoder("dec_l", rng);
  dec_d_ = make_decoder("dec_d", rng);

  const int c = config_.latent_channels();
  unet_.block_fine = Conv2d("unet.block_fine", c, c, 3, 1, rng);
  unet_.down = Conv2d("unet.down", c, c, 3, 2, rng);
  unet_.merge = Conv2d("unet.merge", 2 * c, c, 3, 1, rng);
  unet_.merge.weight.value *= 0.1;
  unet_.site_coarse = make_site("unet.site_coarse", rng);
  unet_.site_fine = make_site("unet.site_fine", rng);

  int in = c;
  for (std::size_t i = 0; i < config_.reflectance_channels.size(); ++i) {
    const int out = config_.reflectance_channels[i];
    refl_.up.emplace_back("refl.up" + std::to_string(i), in, out, 3, 1, rng);
    in = out;
  }
  refl_.to_rgb = Conv2d("refl.to_rgb", in, 3, 3, 1, rng);

  dis_l_ = make_discriminator("dis_l", rng);
  dis_d_ = make_discriminator("dis_d", rng);
  configure_finetuning();
}

Backbone::Encoder Backbone::make_encoder(const std::string& name, std::mt19937_64& rng) {
  Encoder e;
  int in = 3;
  for (int i = 0; i < config_.num_scales; ++i) {
    const int out = config_.encoder_channels[i];
    e.down.emplace_back(name + ".down" + std::to_string(i), in, out, 3, 2, rng, config_.lora_rank, config_.lora_alpha);
    in = out;
  }
  return e;
}

Backbone::Decoder Backbone::make_decoder(const std::string& name, std::mt19937_64& rng) {
  Decoder d;
  const auto& ch = config_.encoder_channels;
  int in = ch.back();
  for (int i = config_.num_scales - 1; i >= 1; --i) {
    const int out = ch[i - 1];
    d.up.emplace_back(name + ".up" + std::to_string(i), in + ch[i - 1], out, 3, 1, rng, config_.lora_rank,
                      config_.lora_alpha);
    in = out;
  }
  d.refine = Conv2d(name + ".refine", in, in, 3, 1, rng, config_.lora_rank, config_.lora_alpha);
  d.to_rgb = Conv2d(name + ".to_rgb", in, 3, 3, 1, rng, config_.lora_rank, config_.lora_alpha);
  return d;
}

Backbone::Site Backbone::make_site(const std::string& name, std::mt19937_64& rng) {
  const int c = config_.latent_channels();
  const int dt = config_.text_dim;
  const int di = config_.prompt_dim;
  Site s;
  s.text_q = Parameter(name + ".text_q", random_normal(c, c, 1.0 / std::sqrt(Real(c)), rng));
  s.text_k = Parameter(name + ".text_k", random_normal(dt, c, 1.0 / std::sqrt(Real(dt)), rng));
  s.text_v = Parameter(name + ".text_v", random_normal(dt, c, 0.1 / std::sqrt(Real(dt)), rng));
  s.prompt_q = Parameter(name + ".prompt_q", random_normal(di, c, 1.0 / std::sqrt(Real(di)), rng));
  s.prompt_k = Parameter(name + ".prompt_k", random_normal(di, c, 1.0 / std::sqrt(Real(di)), rng));
  // Zero value projection: the adapter contributes nothing until trained.
  s.prompt_v = Parameter(name + ".prompt_v", Matrix::Zero(di, c));
  return s;
}

Backbone::Discriminator Backbone::make_discriminator(const std::string& name, std::mt19937_64& rng) {
  Discriminator d;
  int in = 3;
  for (std::size_t i = 0; i < config_.discriminator_channels.size(); ++i) {
    const int out = config_.discriminator_channels[i];
    d.layers.emplace_back(name + ".conv" + std::to_string(i), in, out, 3, 2, rng);
    in = out;
  }
  d.layers.emplace_back(name + ".head", in, 1, 3, 1, rng);
  return d;
}

Matrix Backbone::embed_text(const std::string& prompt) const {
  std::istringstream is(prompt);
  std::vector<std::string> tokens;
  for (std::string tok; is >> tok;) tokens.push_back(tok);
  if (tokens.empty()) throw std::invalid_argument("embed_text: prompt must contain at least one token");
  if (static_cast<int>(tokens.size()) > config_.max_text_tokens) tokens.resize(config_.max_text_tokens);
  Matrix out(static_cast<Eigen::Index>(tokens.size()), config_.text_dim);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(stable_hash64(tokens[i]) % static_cast<std::uint64_t>(config_.text_vocab));
    out.row(static_cast<Eigen::Index>(i)) = text_table_.value.row(row);
  }
  return out;
}

std::vector<ScaleShape> Backbone::unet_scales(int height, int width) const {
  const int f = 1 << config_.num_scales;
  return {{height / (2 * f), width / (2 * f)}, {height / f, width / f}};
}

std::vector<Matrix> Backbone::image_prompt_tokens(const Matrix& illumination_map) const {
  const int h = static_cast<int>(illumination_map.rows()), w = static_cast<int>(illumination_map.cols());
  if (h % config_.required_divisor() != 0 || w % config_.required_divisor() != 0) {
    throw ShapeError("image prompt map must have sides divisible by " + std::to_string(config_.required_divisor()));
  }
  return extract_image_prompt_features(illumination_map, unet_scales(h, w),
                                       {lift_params_.value.row(0), lift_params_.value.row(1)});
}

FeatureMap Backbone::image_input(Tape& tape, const Image& img) {
  return {tape.constant(img.pixels), img.height, img.width};
}

Image Backbone::to_image(const FeatureMap& fm) {
  if (fm.channels() != 3) throw ShapeError("to_image: expected 3 channels");
  Image img(fm.height, fm.width);
  img.pixels = fm.data.value();
  return img;
}

Encoded Backbone::encode(Tape& tape, const FeatureMap& img, Direction direction) {
  const int f = 1 << config_.num_scales;
  if (img.height % f != 0 || img.width % f != 0) {
    throw ShapeError("encode: height and width must be divisible by " + std::to_string(f) + " (2^num_scales), got " +
                     std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  Encoder& e = encoder(direction);
  Encoded out;
  FeatureMap x = img;
  for (std::size_t i = 0; i < e.down.size(); ++i) {
    x = act(e.down[i].forward(tape, x));
    if (i + 1 < e.down.size()) out.skips.push_back(x);
  }
  out.latent = x;
  return out;
}

SiteWeights Backbone::bind(Tape& tape, Site& s) {
  return {tape.param(s.text_q),   tape.param(s.text_k),   tape.param(s.text_v),
          tape.param(s.prompt_q), tape.param(s.prompt_k), tape.param(s.prompt_v)};
}

LatentStack Backbone::unet_forward(Tape& tape, const FeatureMap& latent, const ConditionBundle& cond,
                                   AdapterMode mode) {
  if (latent.channels() != config_.latent_channels()) throw ShapeError("unet_forward: latent channel mismatch");
  if (latent.height % 2 != 0 || latent.width % 2 != 0) throw ShapeError("unet_forward: latent sides must be even");
  if (cond.text_tokens.cols() != config_.text_dim || cond.text_tokens.rows() < 1) {
    throw ShapeError("unet_forward: text tokens must be L x " + std::to_string(config_.text_dim));
  }
  const std::vector<ScaleShape> scales{{latent.height / 2, latent.width / 2}, {latent.height, latent.width}};
  const bool with_prompt = !cond.image_prompt_tokens.empty();
  if (with_prompt) {
    if (cond.image_prompt_tokens.size() != scales.size()) throw ShapeError("unet_forward: one prompt per scale required");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (cond.image_prompt_tokens[i].rows() != scales[i].tokens() ||
          cond.image_prompt_tokens[i].cols() != config_.prompt_dim) {
        throw ShapeError("unet_forward: image prompt at scale " + std::to_string(i) + " has " +
                         std::to_string(cond.image_prompt_tokens[i].rows()) + " tokens, latent scale has " +
                         std::to_string(scales[i].tokens()));
      }
    }
  }
  const Var c_t = tape.constant(cond.text_tokens);
  auto prompt = [&](std::size_t i) -> std::optional<Var> {
    if (!with_prompt) return std::nullopt;
    return tape.constant(cond.image_prompt_tokens[i]);
  };

  LatentStack stack;
  FeatureMap fine = act(unet_.block_fine.forward(tape, latent));
  FeatureMap coarse = act(unet_.down.forward(tape, fine));
  stack.scales = {coarse, fine};

  const Var fine_out = condition_site(fine.data, c_t, prompt(1), mode, bind(tape, unet_.site_fine));
  const Var coarse_out = condition_site(coarse.data, c_t, prompt(0), mode, bind(tape, unet_.site_coarse));
  FeatureMap up = ops::upsample2x({coarse_out, coarse.height, coarse.width});
  FeatureMap merged = unet_.merge.forward(tape, concat(up, {fine_out, fine.height, fine.width}));
  stack.final = {ops::add(latent.data, merged.data), latent.height, latent.width};
  return stack;
}

FeatureMap Backbone::decode(Tape& tape, const FeatureMap& latent, const std::vector<FeatureMap>& skips,
                            Direction direction) {
  Decoder& d = decoder(direction);
  if (skips.size() != d.up.size()) throw ShapeError("decode: expected " + std::to_string(d.up.size()) + " skips");
  FeatureMap x = latent;
  for (std::size_t i = 0; i < d.up.size(); ++i) {
    x = act(d.up[i].forward(tape, concat(ops::upsample2x(x), skips[skips.size() - 1 - i])));
  }
  x = act(d.refine.forward(tape, ops::upsample2x(x)));
  FeatureMap rgb = d.to_rgb.forward(tape, x);
  return {ops::sigmoid(rgb.data), rgb.height, rgb.width};
}

FeatureMap Backbone::reflectance_decode(Tape& tape, const FeatureMap& final_latent) {
  if (final_latent.channels() != config_.latent_channels()) throw ShapeError("reflectance_decode: latent channel mismatch");
  FeatureMap x = final_latent;
  for (Conv2d& c : refl_.up) x = act(c.forward(tape, ops::upsample2x(x)));
  for (int i = static_cast<int>(refl_.up.size()); i < config_.num_scales; ++i) x = ops::upsample2x(x);
  FeatureMap rgb = refl_.to_rgb.forward(tape, x);
  return {ops::sigmoid(rgb.data), rgb.height, rgb.width};
}

FeatureMap Backbone::discriminate(Tape& tape, const FeatureMap& img, Direction direction) {
  Discriminator& d = direction == Direction::lighten ? dis_l_ : dis_d_;
  FeatureMap x = img;
  for (std::size_t i = 0; i + 1 < d.layers.size(); ++i) x = act(d.layers[i].forward(tape, x));
  return d.layers.back().forward(tape, x);
}

FeatureMap Backbone::generate(Tape& tape, const FeatureMap& img, const ConditionBundle& cond, AdapterMode mode,
                              LatentStack* stack_out) {
  Encoded e = encode(tape, img, cond.direction);
  LatentStack stack = unet_forward(tape, e.latent, cond, mode);
  FeatureMap out = decode(tape, stack.final, e.skips, cond.direction);
  if (stack_out) *stack_out = stack;
  return out;
}

std::vector<Conv2d*> Backbone::lora_convs() {
  std::vector<Conv2d*> out;
  for (Encoder* e : {&enc_l_, &enc_d_}) {
    for (Conv2d& c : e->down) out.push_back(&c);
  }
  for (Decoder* d : {&dec_l_, &dec_d_}) {
    for (Conv2d& c : d->up) out.push_back(&c);
    out.push_back(&d->refine);
    out.push_back(&d->to_rgb);
  }
  return out;
}

void Backbone::set_lora_enabled(bool enabled) {
  for (Conv2d* c : lora_convs()) c->lora_enabled = enabled;
}

const std::vector<std::string>& Backbone::group_names() {
  static const std::vector<std::string> names{"base", "lora", "adapter", "reflectance_decoder", "discriminators"};
  return names;
}

std::vector<Parameter*> Backbone::group(const std::string& name) {
  std::vector<Parameter*> out;
  auto conv = [&out](Conv2d& c) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  };
  if (name == "base") {
    out.push_back(&text_table_);
    out.push_back(&lift_params_);
    for (Conv2d* c : lora_convs()) conv(*c);
    conv(unet_.block_fine);
    conv(unet_.down);
    conv(unet_.merge);
    for (Site* s : {&unet_.site_coarse, &unet_.site_fine}) {
      out.push_back(&s->text_q);
      out.push_back(&s->text_k);
      out.push_back(&s->text_v);
    }
  } else if (name == "lora") {
    for (Conv2d* c : lora_convs()) {
      out.push_back(&c->lora_a);
      out.push_back(&c->lora_b);
    }
  } else if (name == "adapter") {
    for (Site* s : {&unet_.site_coarse, &unet_.site_fine}) {
      out.push_back(&s->prompt_q);
      out.push_back(&s->prompt_k);
      out.push_back(&s->prompt_v);
    }
  } else if (name == "reflectance_decoder") {
    for (Conv2d& c : refl_.up) conv(c);
    conv(refl_.to_rgb);
  } else if (name == "discriminators") {
    for (Discriminator* d : {&dis_l_, &dis_d_}) {
      for (Conv2d& c : d->layers) conv(c);
    }
  } else {
    throw std::invalid_argument("unknown parameter group '" + name + "'");
  }
  return out;
}

std::vector<Parameter*> Backbone::all_parameters() {
  std::vector<Parameter*> out;
  for (const std::string& g : group_names()) {
    auto ps = group(g);
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<Parameter*> Backbone::generator_trainables() {
  std::vector<Parameter*> out;
  for (const char* g : {"lora", "adapter", "reflectance_decoder"}) {
    auto ps = group(g);
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<Parameter*> Backbone::discriminator_parameters() { return group("discriminators"); }

void Backbone::configure_pretraining() {
  for (Parameter* p : all_parameters()) p->trainable = false;
  for (Parameter* p : group("base")) p->trainable = true;
  text_table_.trainable = false;
  lift_params_.trainable = false;
  set_lora_enabled(false);
}

void Backbone::configure_finetuning() {
  for (Parameter* p : all_parameters()) p->trainable = false;
  for (Parameter* p : generator_trainables()) p->trainable = true;
  for (Parameter* p : discriminator_parameters()) p->trainable = true;
  set_lora_enabled(true);
}

void Backbone::copy_lighten_base_to_darken() {
  for (std::size_t i = 0; i < enc_l_.down.size(); ++i) {
    enc_d_.down[i].weight.value = enc_l_.down[i].weight.value;
    enc_d_.down[i].bias.value = enc_l_.down[i].bias.value;
  }
  auto copy = [](Conv2d& dst, const Conv2d& src) {
    dst.weight.value = src.weight.value;
    dst.bias.value = src.bias.value;
  };
  for (std::size_t i = 0; i < dec_l_.up.size(); ++i) copy(dec_d_.up[i], dec_l_.up[i]);
  copy(dec_d_.refine, dec_l_.refine);
  copy(dec_d_.to_rgb, dec_l_.to_rgb);
}

}  // namespace scuf
