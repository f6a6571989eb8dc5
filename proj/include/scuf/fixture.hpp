#pragma once

#include "scuf/imaging.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace scuf {

inline const std::vector<std::string>& shape_classes() {
  static const std::vector<std::string> names{"circle", "square", "triangle", "cross"};
  return names;
}

struct FixtureOptions {
  std::uint64_t seed = 7;
  int size = 64;
  int train_pairs = 32;
  int test_count = 64;
  int classifier_count = 400;
  Real gamma_min = 2.5;
  Real gamma_max = 4.0;
  Real noise_sigma = 0.04;
};

struct RenderedShape {
  Image image;
  int label = 0;
  std::string caption;
};

// Anti-aliased shape of class `label` over a two-colour gradient with mild texture.
RenderedShape render_shape(int label, int size, std::mt19937_64& rng);

struct FixtureSummary {
  int low = 0;
  int normal = 0;
  int test = 0;
  int classifier = 0;
};

// Layout under root:
//   train/low, train/normal     unpaired, drawn from disjoint originals
//   test/low, test/gt           paired held-out set with labels.json
//   classifier                  bright labelled images with labels.json
//   manifest.json               per-sample path, label, split, gamma, noise, seed
// Each image has a <stem>.caption.txt sidecar. Output is byte-identical for a fixed seed.
FixtureSummary write_fixture(const std::filesystem::path& root, const FixtureOptions& options);

// stem -> class index, read from <dir>/labels.json.
std::map<std::string, int> load_labels(const std::filesystem::path& dir);

}  // namespace scuf
