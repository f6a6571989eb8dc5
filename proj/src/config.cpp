#include "scuf/config.hpp"

#include "scuf/errors.hpp"
#include "scuf/hash.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace scuf {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Real to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const Real r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("field '" + key + "': expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("field '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("field '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(Real v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

BackboneConfig TrainerConfig::backbone() const {
  BackboneConfig b;
  b.lora_rank = lora_rank;
  b.lora_alpha = lora_alpha;
  b.seed = seed;
  return b;
}

void TrainerConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(learning_rate > 0, "learning_rate must be > 0");
  require(discriminator_learning_rate > 0, "discriminator_learning_rate must be > 0");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(optimizer_epsilon > 0, "optimizer_epsilon must be > 0");
  require(grad_clip_max_norm > 0, "grad_clip_max_norm must be > 0");
  require(batch_size == 1, "batch_size must be 1");
  const int divisor = backbone().required_divisor();
  require(crop_size > 0 && crop_size % divisor == 0,
          "crop_size must be a positive multiple of " + std::to_string(divisor));
  require(iterations >= 1, "iterations must be >= 1");
  require(lambda_idt >= 0 && lambda_gan >= 0, "objective weights must be >= 0");
  require(lora_rank >= 1, "lora_rank must be >= 1");
  require(!text_prompt_lighten.empty() && !text_prompt_darken.empty(), "text prompts must be non-empty");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(pretrain_steps >= 0, "pretrain_steps must be >= 0");
  require(pretrain_learning_rate > 0, "pretrain_learning_rate must be > 0");
  require(retinex_blur_sigma > 0, "retinex_blur_sigma must be > 0");
  require(retinex_eps > 0 && retinex_eps <= 0.1, "retinex_eps must lie in (0, 0.1]");
}

std::string TrainerConfig::to_text() const {
  std::ostringstream os;
  os << "learning_rate = " << fmt(learning_rate) << '\n'
     << "discriminator_learning_rate = " << fmt(discriminator_learning_rate) << '\n'
     << "weight_decay = " << fmt(weight_decay) << '\n'
     << "optimizer_epsilon = " << fmt(optimizer_epsilon) << '\n'
     << "grad_clip_max_norm = " << fmt(grad_clip_max_norm) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "crop_size = " << crop_size << '\n'
     << "iterations = " << iterations << '\n'
     << "lambda_idt = " << fmt(lambda_idt) << '\n'
     << "lambda_gan = " << fmt(lambda_gan) << '\n'
     << "adapter_mode = " << to_string(adapter_mode) << '\n'
     << "lora_rank = " << lora_rank << '\n'
     << "lora_alpha = " << fmt(lora_alpha) << '\n'
     << "seed = " << seed << '\n'
     << "text_prompt_lighten = " << text_prompt_lighten << '\n'
     << "text_prompt_darken = " << text_prompt_darken << '\n'
     << "caption_consistency = " << (caption_consistency ? "true" : "false") << '\n'
     << "reflectance_consistency = " << (reflectance_consistency ? "true" : "false") << '\n'
     << "checkpoint_every = " << checkpoint_every << '\n'
     << "pretrain_steps = " << pretrain_steps << '\n'
     << "pretrain_learning_rate = " << fmt(pretrain_learning_rate) << '\n'
     << "retinex_blur_sigma = " << fmt(retinex_blur_sigma) << '\n'
     << "retinex_eps = " << fmt(retinex_eps) << '\n';
  return os.str();
}

std::vector<std::string> TrainerConfig::field_names() {
  std::vector<std::string> out;
  std::istringstream in(TrainerConfig{}.to_text());
  for (std::string line; std::getline(in, line);) out.push_back(trim(line.substr(0, line.find('='))));
  return out;
}

std::string TrainerConfig::hash() const { return sha256_hex(to_text()); }

void TrainerConfig::set(const std::string& key, const std::string& v) {
  using Setter = std::function<void(TrainerConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters{
      {"learning_rate", [](TrainerConfig& c, const std::string& s) { c.learning_rate = to_real("learning_rate", s); }},
      {"discriminator_learning_rate",
       [](TrainerConfig& c, const std::string& s) {
         c.discriminator_learning_rate = to_real("discriminator_learning_rate", s);
       }},
      {"weight_decay", [](TrainerConfig& c, const std::string& s) { c.weight_decay = to_real("weight_decay", s); }},
      {"optimizer_epsilon",
       [](TrainerConfig& c, const std::string& s) { c.optimizer_epsilon = to_real("optimizer_epsilon", s); }},
      {"grad_clip_max_norm",
       [](TrainerConfig& c, const std::string& s) { c.grad_clip_max_norm = to_real("grad_clip_max_norm", s); }},
      {"batch_size", [](TrainerConfig& c, const std::string& s) { c.batch_size = static_cast<int>(to_long("batch_size", s)); }},
      {"crop_size", [](TrainerConfig& c, const std::string& s) { c.crop_size = static_cast<int>(to_long("crop_size", s)); }},
      {"iterations", [](TrainerConfig& c, const std::string& s) { c.iterations = to_long("iterations", s); }},
      {"lambda_idt", [](TrainerConfig& c, const std::string& s) { c.lambda_idt = to_real("lambda_idt", s); }},
      {"lambda_gan", [](TrainerConfig& c, const std::string& s) { c.lambda_gan = to_real("lambda_gan", s); }},
      {"adapter_mode", [](TrainerConfig& c, const std::string& s) { c.adapter_mode = parse_adapter_mode(s); }},
      {"lora_rank", [](TrainerConfig& c, const std::string& s) { c.lora_rank = static_cast<int>(to_long("lora_rank", s)); }},
      {"lora_alpha", [](TrainerConfig& c, const std::string& s) { c.lora_alpha = to_real("lora_alpha", s); }},
      {"seed", [](TrainerConfig& c, const std::string& s) { c.seed = static_cast<std::uint64_t>(to_long("seed", s)); }},
      {"text_prompt_lighten", [](TrainerConfig& c, const std::string& s) { c.text_prompt_lighten = s; }},
      {"text_prompt_darken", [](TrainerConfig& c, const std::string& s) { c.text_prompt_darken = s; }},
      {"caption_consistency",
       [](TrainerConfig& c, const std::string& s) { c.caption_consistency = to_bool("caption_consistency", s); }},
      {"reflectance_consistency",
       [](TrainerConfig& c, const std::string& s) { c.reflectance_consistency = to_bool("reflectance_consistency", s); }},
      {"checkpoint_every", [](TrainerConfig& c, const std::string& s) { c.checkpoint_every = to_long("checkpoint_every", s); }},
      {"pretrain_steps", [](TrainerConfig& c, const std::string& s) { c.pretrain_steps = to_long("pretrain_steps", s); }},
      {"pretrain_learning_rate",
       [](TrainerConfig& c, const std::string& s) { c.pretrain_learning_rate = to_real("pretrain_learning_rate", s); }},
      {"retinex_blur_sigma",
       [](TrainerConfig& c, const std::string& s) { c.retinex_blur_sigma = to_real("retinex_blur_sigma", s); }},
      {"retinex_eps", [](TrainerConfig& c, const std::string& s) { c.retinex_eps = to_real("retinex_eps", s); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown field '" + key + "'");
  it->second(*this, v);
}

TrainerConfig TrainerConfig::parse(const std::string& text, const std::string& source) {
  TrainerConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

TrainerConfig TrainerConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace scuf
