#pragma once

#include "scuf/imaging.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace scuf {

inline constexpr const char* kFallbackCaption = "a photo";

struct Sample {
  Image image;
  std::string caption;
  std::filesystem::path path;
};

// Unpaired low-light and normal-light training images.
struct UnpairedDataset {
  std::vector<Sample> low;
  std::vector<Sample> normal;

  // Reads <root>/low/*.png and <root>/normal/*.png in name order. Captions come from
  // `<stem>.caption.txt` sidecars, falling back to kFallbackCaption.
  static UnpairedDataset load(const std::filesystem::path& root);
  // Throws DataError when either side is empty.
  void validate() const;
  std::string fingerprint_low() const;
  std::string fingerprint_normal() const;
};

std::string read_caption(const std::filesystem::path& image_path);
std::vector<Sample> load_samples(const std::filesystem::path& dir);

struct TrainingPair {
  Image low;
  Image normal;
  std::string caption_low;
  std::string caption_normal;
  std::size_t low_index = 0;
  std::size_t normal_index = 0;
};

// Random flip, then bilinear upscaling when a side is below crop_size, then a random crop.
Image augment(const Image& img, int crop_size, std::mt19937_64& rng);

// Independent uniform draws from each side, each augmented.
TrainingPair sample_pair(const UnpairedDataset& data, int crop_size, std::mt19937_64& rng);

}  // namespace scuf
