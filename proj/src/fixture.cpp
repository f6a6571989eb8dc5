#include "scuf/fixture.hpp"

#include "scuf/checkpoint.hpp"
#include "scuf/hash.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace scuf {
namespace {

namespace fs = std::filesystem;
using Vec3 = Eigen::Matrix<Real, 1, 3>;

struct NamedColor {
  const char* name;
  Vec3 rgb;
};

const std::vector<NamedColor>& palette() {
  static const std::vector<NamedColor> colors{
      {"red", {0.85, 0.15, 0.12}},    {"green", {0.2, 0.7, 0.25}},   {"blue", {0.15, 0.3, 0.85}},
      {"yellow", {0.92, 0.85, 0.2}},  {"orange", {0.95, 0.55, 0.1}}, {"purple", {0.55, 0.25, 0.7}},
      {"white", {0.95, 0.95, 0.92}},  {"cyan", {0.2, 0.8, 0.85}},    {"pink", {0.95, 0.55, 0.7}},
      {"gray", {0.55, 0.55, 0.55}},   {"teal", {0.1, 0.5, 0.5}},     {"brown", {0.5, 0.32, 0.18}},
  };
  return colors;
}

constexpr Real kForegroundContrast = 0.6;

Real luminance(const Vec3& c) { return 0.299 * c(0) + 0.587 * c(1) + 0.114 * c(2); }

// Signed inside test in shape-local coordinates where the shape spans roughly [-1, 1].
bool inside(int label, Real u, Real v) {
  switch (label) {
    case 0:
      return u * u + v * v <= 1.0;
    case 1:
      return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
    case 2: {
      // Upward triangle with apex at v = -1 and base at v = 0.8.
      if (v < -1.0 || v > 0.8) return false;
      const Real half = (v + 1.0) / 1.8;
      return std::abs(u) <= half;
    }
    default:
      return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text << '\n';
}

std::string stem_name(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", prefix, index);
  return buf;
}

}  // namespace

RenderedShape render_shape(int label, int size, std::mt19937_64& rng) {
  if (label < 0 || label >= static_cast<int>(shape_classes().size())) throw std::invalid_argument("render_shape: bad label");
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, palette().size() - 1);

  const std::size_t bg_a = pick(rng);
  std::size_t bg_b = pick(rng);
  std::size_t fg = pick(rng);
  const Vec3 bg0 = palette()[bg_a].rgb;
  while (std::abs(luminance(palette()[fg].rgb) - luminance(bg0)) < 0.3) fg = pick(rng);
  while (std::abs(luminance(palette()[fg].rgb) - luminance(palette()[bg_b].rgb)) < 0.3) bg_b = pick(rng);
  // Backgrounds are muted towards mid grey so the foreground stays dominant.
  const Vec3 bg1 = 0.6 * palette()[bg_b].rgb + 0.4 * Vec3::Constant(0.5);
  const Vec3 bg0m = 0.6 * bg0 + 0.4 * Vec3::Constant(0.5);
  const Vec3 fgc = 0.5 * (bg0m + bg1) + kForegroundContrast * (palette()[fg].rgb - 0.5 * (bg0m + bg1));

  const Real angle = unit(rng) * 2 * std::numbers::pi;
  const Real gx = std::cos(angle), gy = std::sin(angle);
  const Real radius = size * (0.28 + 0.06 * unit(rng));
  const Real cx = size * (0.46 + 0.08 * unit(rng));
  const Real cy = size * (0.46 + 0.08 * unit(rng));
  const Real rot = (label == 0 ? 0.0 : (unit(rng) - 0.5) * 0.2);
  const Real cr = std::cos(rot), sr = std::sin(rot);
  const Real texture = 0.03;
  std::normal_distribution<Real> grain(0.0, texture);

  RenderedShape out;
  out.label = label;
  out.image = Image(size, size);
  constexpr int ss = 3;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Real t = 0.5 + 0.5 * ((x / Real(size) - 0.5) * gx + (y / Real(size) - 0.5) * gy) * 1.4;
      const Vec3 bg = (1 - t) * bg0m + t * bg1;
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Real px = x + (sx + 0.5) / ss - cx;
          const Real py = y + (sy + 0.5) / ss - cy;
          const Real u = (cr * px + sr * py) / radius;
          const Real v = (-sr * px + cr * py) / radius;
          hits += inside(label, u, v) ? 1 : 0;
        }
      }
      const Real cover = hits / Real(ss * ss);
      const Vec3 c = cover * fgc + (1 - cover) * bg;
      const Real g = grain(rng);
      for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = std::clamp(c(ch) + g, 0.0, 1.0);
    }
  }
  out.caption = std::string("a photo of a ") + palette()[fg].name + " " + shape_classes()[label] + " on a " +
                palette()[bg_a].name + " background";
  return out;
}

FixtureSummary write_fixture(const fs::path& root, const FixtureOptions& options) {
  if (options.size < 16 || options.size % 16 != 0) throw ConfigError("fixture size must be a positive multiple of 16");
  if (options.gamma_min <= 1.0 || options.gamma_max < options.gamma_min)
    throw ConfigError("fixture gamma range must satisfy 1 < gamma_min <= gamma_max");
  for (const char* sub : {"train/low", "train/normal", "test/low", "test/gt", "classifier"}) {
    fs::create_directories(root / sub);
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<Real> gamma(options.gamma_min, options.gamma_max);
  nlohmann::json samples = nlohmann::json::array();
  const int classes = static_cast<int>(shape_classes().size());
  int counter = 0;

  auto record = [&](const fs::path& rel, int label, const std::string& split, Real g, Real sigma,
                    std::uint64_t seed) {
    samples.push_back({{"path", rel.generic_string()},
                       {"label", shape_classes()[label]},
                       {"split", split},
                       {"gamma", g},
                       {"noise_sigma", sigma},
                       {"seed", seed}});
  };
  auto emit = [&](const Image& img, const std::string& caption, const fs::path& rel) {
    save_image(img, root / rel);
    fs::path cap = root / rel;
    cap.replace_extension(".caption.txt");
    write_text(cap, caption);
  };

  FixtureSummary summary;
  for (int i = 0; i < options.train_pairs; ++i) {
    const RenderedShape s = render_shape(counter++ % classes, options.size, rng);
    const Real g = gamma(rng);
    const std::uint64_t seed = rng();
    const fs::path rel = fs::path("train/low") / (stem_name("low", i) + ".png");
    emit(degrade(s.image, g, options.noise_sigma, seed), s.caption, rel);
    record(rel, s.label, "train_low", g, options.noise_sigma, seed);
    ++summary.low;
  }
  for (int i = 0; i < options.train_pairs; ++i) {
    const RenderedShape s = render_shape(counter++ % classes, options.size, rng);
    const fs::path rel = fs::path("train/normal") / (stem_name("normal", i) + ".png");
    emit(s.image, s.caption, rel);
    record(rel, s.label, "train_normal", 1.0, 0.0, 0);
    ++summary.normal;
  }
  nlohmann::json test_labels = nlohmann::json::object();
  for (int i = 0; i < options.test_count; ++i) {
    const RenderedShape s = render_shape(i % classes, options.size, rng);
    const Real g = gamma(rng);
    const std::uint64_t seed = rng();
    const std::string stem = stem_name("test", i);
    const fs::path gt = fs::path("test/gt") / (stem + ".png");
    const fs::path low = fs::path("test/low") / (stem + ".png");
    emit(s.image, s.caption, gt);
    emit(degrade(s.image, g, options.noise_sigma, seed), s.caption, low);
    record(gt, s.label, "test_gt", 1.0, 0.0, 0);
    record(low, s.label, "test_low", g, options.noise_sigma, seed);
    test_labels[stem] = shape_classes()[s.label];
    ++summary.test;
  }
  nlohmann::json classifier_labels = nlohmann::json::object();
  for (int i = 0; i < options.classifier_count; ++i) {
    const RenderedShape s = render_shape(i % classes, options.size, rng);
    const std::string stem = stem_name("cls", i);
    const fs::path rel = fs::path("classifier") / (stem + ".png");
    emit(s.image, s.caption, rel);
    record(rel, s.label, "classifier", 1.0, 0.0, 0);
    classifier_labels[stem] = shape_classes()[s.label];
    ++summary.classifier;
  }
  write_file_atomic(root / "test" / "labels.json", test_labels.dump(2) + "\n");
  write_file_atomic(root / "classifier" / "labels.json", classifier_labels.dump(2) + "\n");
  const nlohmann::json manifest{{"seed", options.seed},
                                {"size", options.size},
                                {"gamma_range", {options.gamma_min, options.gamma_max}},
                                {"noise_sigma", options.noise_sigma},
                                {"classes", shape_classes()},
                                {"samples", samples}};
  write_file_atomic(root / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

std::map<std::string, int> load_labels(const fs::path& dir) {
  const fs::path path = dir / "labels.json";
  std::ifstream in(path);
  if (!in) throw DataError("missing labels file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed labels file " + path.string() + ": " + e.what());
  }
  std::map<std::string, int> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string name = it.value().get<std::string>();
    const auto& classes = shape_classes();
    const auto pos = std::find(classes.begin(), classes.end(), name);
    if (pos == classes.end()) throw DataError("unknown label '" + name + "' in " + path.string());
    out[it.key()] = static_cast<int>(pos - classes.begin());
  }
  return out;
}

}  // namespace scuf
