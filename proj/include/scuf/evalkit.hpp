#pragma once

#include "scuf/backbone.hpp"
#include "scuf/config.hpp"
#include "scuf/imaging.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace scuf {

// PSNR in dB for images in [0,1]; capped at 100 dB when the MSE is below 1e-10.
Real psnr(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;
inline constexpr Real kSsimSigma = 1.5;
inline constexpr Real kSsimK1 = 0.01;
inline constexpr Real kSsimK2 = 0.03;

// Normalised 11-tap Gaussian, sigma 1.5.
Eigen::Matrix<Real, 1, kSsimWindow> ssim_kernel();

// Mean SSIM over valid Gaussian windows, averaged over RGB. Needs both sides >= 11.
Real ssim(const Image& a, const Image& b);

// Single lighten pass conditioned on the lighten prompt and the reverse illumination map. Inputs
// whose sides are not multiples of the backbone divisor are edge-padded and cropped back.
Image enhance(Backbone& backbone, const Image& img, const TrainerConfig& config);

// Small convolutional shape classifier used as the fixed downstream model. Inputs of another size
// are resized to input_size.
class ToyClassifier {
 public:
  explicit ToyClassifier(std::uint64_t seed = 11, int classes = 4, int input_size = 64);

  // Fits input standardisation, then cross-entropy training with flips; returns accuracy on the training images afterwards.
  Real fit(const std::vector<Image>& images, const std::vector<int>& labels, int epochs = 30, Real lr = 2e-3);

  Matrix logits(const Image& img);
  int predict(const Image& img);
  Real top1(const std::vector<Image>& images, const std::vector<int>& labels);

  std::string fingerprint();
  int classes() const { return classes_; }

 private:
  FeatureMap forward(Tape& tape, const Image& img);
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> all_parameters();

  int classes_;
  int input_size_;
  std::uint64_t seed_;
  std::vector<Conv2d> convs_;
  Parameter head_w_;
  Parameter head_b_;
  Parameter input_mean_;   // 1 x 3
  Parameter input_scale_;  // 1 x 3, inverse std
};

struct GefuResult {
  Real bright_top1 = 0;
  Real dark_top1 = 0;
  Real enhanced_top1 = 0;
  Real gain = 0;  // enhanced - dark, in percentage points
};

// Top-1 (percent) of a frozen classifier on bright, dark and enhanced versions of the same set.
// Throws DataError on count/label mismatch and std::logic_error if the classifier weights changed.
GefuResult gefu_evaluate(ToyClassifier& classifier, const std::vector<Image>& bright, const std::vector<Image>& dark,
                         const std::vector<Image>& enhanced, const std::vector<int>& labels);

struct LabelledSet {
  std::vector<std::string> names;
  std::vector<Image> images;
  std::vector<int> labels;
};

// Loads <dir>/*.png with labels from <dir>/labels.json.
LabelledSet load_labelled(const std::filesystem::path& dir);

struct TestSet {
  std::vector<std::string> names;
  std::vector<Image> low;
  std::vector<Image> gt;
  std::vector<int> labels;
};

// Paired test/low and test/gt with labels from test/labels.json.
TestSet load_test_set(const std::filesystem::path& test_dir);

struct EvalReport {
  Real psnr_dark = 0;
  Real psnr_enhanced = 0;
  Real ssim_dark = 0;
  Real ssim_enhanced = 0;
  GefuResult gefu;
  std::string classifier_fingerprint;
  std::vector<Image> enhanced;
  nlohmann::json per_image = nlohmann::json::array();

  nlohmann::json to_json() const;
};

// Enhances every held-out image and scores restoration and downstream accuracy.
EvalReport evaluate(Backbone& backbone, const TrainerConfig& config, const TestSet& test, ToyClassifier& classifier);

// Trains the downstream classifier on the fixture's classifier split.
ToyClassifier train_toy_classifier(const std::filesystem::path& classifier_dir, std::uint64_t seed = 11);

}  // namespace scuf
