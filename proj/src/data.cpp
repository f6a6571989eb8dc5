#include "scuf/data.hpp"

#include "scuf/hash.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace scuf {

namespace fs = std::filesystem;

std::string read_caption(const fs::path& image_path) {
  fs::path sidecar = image_path;
  sidecar.replace_extension(".caption.txt");
  std::ifstream in(sidecar);
  if (!in) return kFallbackCaption;
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.pop_back();
  if (text.find_first_not_of(" \t\n") == std::string::npos) return kFallbackCaption;
  return text;
}

std::vector<Sample> load_samples(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory missing: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Sample> out;
  out.reserve(paths.size());
  for (const fs::path& p : paths) out.push_back(Sample{load_image(p), read_caption(p), p});
  return out;
}

UnpairedDataset UnpairedDataset::load(const fs::path& root) {
  UnpairedDataset d;
  d.low = load_samples(root / "low");
  d.normal = load_samples(root / "normal");
  d.validate();
  return d;
}

void UnpairedDataset::validate() const {
  if (low.empty()) throw DataError("training set has no low-light images");
  if (normal.empty()) throw DataError("training set has no normal-light images");
}

namespace {
std::string fingerprint_samples(const std::vector<Sample>& samples) {
  Sha256 h;
  for (const Sample& s : samples) {
    h.update(s.caption);
    h.update(s.image.pixels);
  }
  return h.hex_digest();
}
}  // namespace

std::string UnpairedDataset::fingerprint_low() const { return fingerprint_samples(low); }
std::string UnpairedDataset::fingerprint_normal() const { return fingerprint_samples(normal); }

Image augment(const Image& img, int crop_size, std::mt19937_64& rng) {
  std::bernoulli_distribution flip(0.5);
  Image out = flip(rng) ? flip_horizontal(img) : img;
  if (out.height < crop_size || out.width < crop_size) {
    const Real s = static_cast<Real>(crop_size) / std::min(out.height, out.width);
    const int h = std::max(crop_size, static_cast<int>(std::ceil(out.height * s)));
    const int w = std::max(crop_size, static_cast<int>(std::ceil(out.width * s)));
    out = resize_bilinear(out, h, w);
  }
  std::uniform_int_distribution<int> top(0, out.height - crop_size);
  std::uniform_int_distribution<int> left(0, out.width - crop_size);
  const int t = top(rng);
  const int l = left(rng);
  return crop(out, t, l, crop_size, crop_size);
}

TrainingPair sample_pair(const UnpairedDataset& data, int crop_size, std::mt19937_64& rng) {
  data.validate();
  std::uniform_int_distribution<std::size_t> pick_low(0, data.low.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_normal(0, data.normal.size() - 1);
  TrainingPair p;
  p.low_index = pick_low(rng);
  p.normal_index = pick_normal(rng);
  p.low = augment(data.low[p.low_index].image, crop_size, rng);
  p.normal = augment(data.normal[p.normal_index].image, crop_size, rng);
  p.caption_low = data.low[p.low_index].caption;
  p.caption_normal = data.normal[p.normal_index].caption;
  return p;
}

}  // namespace scuf
