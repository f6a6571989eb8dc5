#include "scuf/evalkit.hpp"

#include "scuf/checkpoint.hpp"
#include "scuf/fixture.hpp"
#include "scuf/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scuf {

namespace fs = std::filesystem;

Real psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: image shapes differ");
  const Real mse = (a.pixels - b.pixels).squaredNorm() / static_cast<Real>(a.pixels.size());
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

Eigen::Matrix<Real, 1, kSsimWindow> ssim_kernel() {
  Eigen::Matrix<Real, 1, kSsimWindow> k;
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) k(i) = std::exp(-Real((i - r) * (i - r)) / (2 * kSsimSigma * kSsimSigma));
  return k / k.sum();
}

namespace {

// Valid separable filtering of an H x W plane.
Matrix filter_valid(const Matrix& plane, const Eigen::Matrix<Real, 1, kSsimWindow>& k) {
  const Eigen::Index h = plane.rows() - kSsimWindow + 1;
  const Eigen::Index w = plane.cols() - kSsimWindow + 1;
  Matrix rows(plane.rows(), w);
  for (Eigen::Index x = 0; x < w; ++x) rows.col(x) = plane.middleCols(x, kSsimWindow) * k.transpose();
  Matrix out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) out.row(y) = k * rows.middleRows(y, kSsimWindow);
  return out;
}

Matrix channel_plane(const Image& img, int c) {
  Matrix p(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p(y, x) = img.at(y, x, c);
  return p;
}

Image pad_edge(const Image& img, int h, int w) {
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(std::min(y, img.height - 1), std::min(x, img.width - 1), c);
  return out;
}

}  // namespace

Real ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: image shapes differ");
  if (a.height < kSsimWindow || a.width < kSsimWindow) throw ShapeError("ssim: images must be at least 11x11");
  const auto k = ssim_kernel();
  const Real c1 = kSsimK1 * kSsimK1;
  const Real c2 = kSsimK2 * kSsimK2;
  Real total = 0;
  for (int c = 0; c < 3; ++c) {
    const Matrix x = channel_plane(a, c);
    const Matrix y = channel_plane(b, c);
    const Matrix mx = filter_valid(x, k);
    const Matrix my = filter_valid(y, k);
    const Matrix sxx = filter_valid(x.cwiseProduct(x), k) - mx.cwiseProduct(mx);
    const Matrix syy = filter_valid(y.cwiseProduct(y), k) - my.cwiseProduct(my);
    const Matrix sxy = filter_valid(x.cwiseProduct(y), k) - mx.cwiseProduct(my);
    const auto num = (2 * mx.cwiseProduct(my).array() + c1) * (2 * sxy.array() + c2);
    const auto den = (mx.array().square() + my.array().square() + c1) * (sxx.array() + syy.array() + c2);
    total += (num / den).mean();
  }
  return total / 3.0;
}

Image enhance(Backbone& backbone, const Image& img, const TrainerConfig& config) {
  validate_image(img, 1);
  const int d = backbone.config().required_divisor();
  const int h = (img.height + d - 1) / d * d;
  const int w = (img.width + d - 1) / d * d;
  const Image input = (h == img.height && w == img.width) ? img : pad_edge(img, h, w);
  const IlluminationPrompt prompt = illumination_prompt(input);
  ConditionBundle cond{backbone.embed_text(config.text_prompt_lighten), backbone.image_prompt_tokens(prompt.v_reverse),
                       Direction::lighten, "input:reverse"};
  Tape tape;
  const Image out = Backbone::to_image(backbone.generate(tape, Backbone::image_input(tape, input), cond,
                                                         config.adapter_mode));
  return (h == img.height && w == img.width) ? out : crop(out, 0, 0, img.height, img.width);
}

ToyClassifier::ToyClassifier(std::uint64_t seed, int classes, int input_size)
    : classes_(classes), input_size_(input_size), seed_(seed) {
  if (input_size < 16 || input_size % 16 != 0) throw ConfigError("classifier input size must be a multiple of 16");
  std::mt19937_64 rng(seed);
  const std::vector<int> widths{3, 8, 16, 32, 32};
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    convs_.emplace_back("cls.conv" + std::to_string(i), widths[i], widths[i + 1], 3, 2, rng);
  }
  const int cells = (input_size_ / 16) * (input_size_ / 16);
  const int features = cells * widths.back();
  std::normal_distribution<Real> n(0.0, 1.0 / std::sqrt(Real(features)));
  Matrix w(features, classes);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  head_w_ = Parameter("cls.head.weight", w);
  head_b_ = Parameter("cls.head.bias", Matrix::Zero(1, classes));
  input_mean_ = Parameter("cls.input_mean", Matrix::Constant(1, 3, 0.5));
  input_scale_ = Parameter("cls.input_scale", Matrix::Constant(1, 3, 4.0));
}

std::vector<Parameter*> ToyClassifier::parameters() {
  std::vector<Parameter*> out;
  for (Conv2d& c : convs_) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<Parameter*> ToyClassifier::all_parameters() {
  auto out = parameters();
  out.push_back(&input_mean_);
  out.push_back(&input_scale_);
  return out;
}

FeatureMap ToyClassifier::forward(Tape& tape, const Image& img) {
  const Image sized = (img.height == input_size_ && img.width == input_size_)
                          ? img
                          : resize_bilinear(img, input_size_, input_size_);
  Matrix x = sized.pixels.rowwise() - input_mean_.value.row(0);
  x.array().rowwise() *= input_scale_.value.row(0).array();
  FeatureMap h{tape.constant(std::move(x)), sized.height, sized.width};
  for (Conv2d& c : convs_) {
    h = c.forward(tape, h);
    h.data = ops::leaky_relu(h.data, 0.1);
  }
  const Var flat = ops::reshape(h.data, 1, h.data.rows() * h.data.cols());
  const Var logits = ops::add_row(ops::matmul(flat, tape.param(head_w_)), tape.param(head_b_));
  return FeatureMap{logits, 1, 1};
}

Real ToyClassifier::fit(const std::vector<Image>& images, const std::vector<int>& labels, int epochs, Real lr) {
  if (images.size() != labels.size() || images.empty()) throw DataError("classifier: images and labels must match");
  // Per-channel standardisation with training-set statistics.
  Eigen::Matrix<Real, 1, 3> sum = Eigen::Matrix<Real, 1, 3>::Zero();
  Eigen::Matrix<Real, 1, 3> sq = Eigen::Matrix<Real, 1, 3>::Zero();
  Real count = 0;
  for (const Image& img : images) {
    sum += img.pixels.colwise().sum();
    sq += img.pixels.array().square().matrix().colwise().sum();
    count += static_cast<Real>(img.pixels.rows());
  }
  const Eigen::Matrix<Real, 1, 3> mean = sum / count;
  const Eigen::Matrix<Real, 1, 3> var = sq / count - mean.cwiseProduct(mean);
  input_mean_.value = mean;
  input_scale_.value = var.cwiseMax(1e-6).cwiseSqrt().cwiseInverse();

  auto params = parameters();
  for (Parameter* p : params) p->trainable = true;
  AdamW opt(params, AdamWOptions{lr, 0.9, 0.999, 1e-8, 0.0});
  std::mt19937_64 rng(seed_ ^ 0x5eedULL);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  constexpr std::size_t batch = 8;
  std::bernoulli_distribution flip(0.5);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      Tape tape;
      Var loss;
      const std::size_t end = std::min(order.size(), start + batch);
      for (std::size_t i = start; i < end; ++i) {
        const Image& src = images[order[i]];
        const Image img = flip(rng) ? flip_horizontal(src) : src;
        const Var l = ops::cross_entropy(forward(tape, img).data, labels[order[i]]);
        loss = loss.valid() ? ops::add(loss, l) : l;
      }
      loss = ops::scale(loss, 1.0 / static_cast<Real>(end - start));
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
    }
  }
  for (Parameter* p : params) p->trainable = false;
  return top1(images, labels) / 100.0;
}

Matrix ToyClassifier::logits(const Image& img) {
  Tape tape;
  return forward(tape, img).data.value();
}

int ToyClassifier::predict(const Image& img) {
  const Matrix l = logits(img);
  Eigen::Index best = 0;
  l.row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

Real ToyClassifier::top1(const std::vector<Image>& images, const std::vector<int>& labels) {
  if (images.size() != labels.size()) throw DataError("top1: image and label counts differ");
  if (images.empty()) throw DataError("top1: empty evaluation set");
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) correct += predict(images[i]) == labels[i] ? 1 : 0;
  return 100.0 * correct / static_cast<Real>(images.size());
}

std::string ToyClassifier::fingerprint() { return scuf::fingerprint(all_parameters()); }

GefuResult gefu_evaluate(ToyClassifier& classifier, const std::vector<Image>& bright, const std::vector<Image>& dark,
                         const std::vector<Image>& enhanced, const std::vector<int>& labels) {
  if (bright.size() != labels.size() || dark.size() != labels.size() || enhanced.size() != labels.size()) {
    throw DataError("gefu: bright/dark/enhanced/label counts differ");
  }
  for (int l : labels) {
    if (l < 0 || l >= classifier.classes()) throw DataError("gefu: label out of range");
  }
  const std::string before = classifier.fingerprint();
  GefuResult r;
  r.bright_top1 = classifier.top1(bright, labels);
  r.dark_top1 = classifier.top1(dark, labels);
  r.enhanced_top1 = classifier.top1(enhanced, labels);
  r.gain = r.enhanced_top1 - r.dark_top1;
  if (classifier.fingerprint() != before) throw std::logic_error("gefu: classifier weights changed during evaluation");
  return r;
}

LabelledSet load_labelled(const fs::path& dir) {
  const auto labels = load_labels(dir);
  LabelledSet set;
  for (const auto& [stem, label] : labels) {
    const fs::path p = dir / (stem + ".png");
    set.names.push_back(stem);
    set.images.push_back(load_image(p));
    set.labels.push_back(label);
  }
  if (set.images.empty()) throw DataError("no labelled images in " + dir.string());
  return set;
}

TestSet load_test_set(const fs::path& test_dir) {
  const auto labels = load_labels(test_dir);
  TestSet t;
  for (const auto& [stem, label] : labels) {
    t.names.push_back(stem);
    t.low.push_back(load_image(test_dir / "low" / (stem + ".png")));
    t.gt.push_back(load_image(test_dir / "gt" / (stem + ".png")));
    if (!t.low.back().same_shape(t.gt.back())) throw DataError("test pair shape mismatch: " + stem);
    t.labels.push_back(label);
  }
  if (t.names.empty()) throw DataError("empty test set in " + test_dir.string());
  return t;
}

nlohmann::json EvalReport::to_json() const {
  return {{"psnr_dark", psnr_dark},
          {"psnr_enhanced", psnr_enhanced},
          {"psnr_gain", psnr_enhanced - psnr_dark},
          {"ssim_dark", ssim_dark},
          {"ssim_enhanced", ssim_enhanced},
          {"gefu",
           {{"bright_top1", gefu.bright_top1},
            {"dark_top1", gefu.dark_top1},
            {"enhanced_top1", gefu.enhanced_top1},
            {"gain", gefu.gain}}},
          {"classifier_fingerprint", classifier_fingerprint},
          {"per_image", per_image}};
}

EvalReport evaluate(Backbone& backbone, const TrainerConfig& config, const TestSet& test, ToyClassifier& classifier) {
  EvalReport r;
  const std::size_t n = test.names.size();
  for (std::size_t i = 0; i < n; ++i) {
    r.enhanced.push_back(enhance(backbone, test.low[i], config));
    const Real pd = psnr(test.low[i], test.gt[i]);
    const Real pe = psnr(r.enhanced.back(), test.gt[i]);
    const Real sd = ssim(test.low[i], test.gt[i]);
    const Real se = ssim(r.enhanced.back(), test.gt[i]);
    r.psnr_dark += pd;
    r.psnr_enhanced += pe;
    r.ssim_dark += sd;
    r.ssim_enhanced += se;
    r.per_image.push_back({{"name", test.names[i]},
                           {"psnr_dark", pd},
                           {"psnr_enhanced", pe},
                           {"ssim_dark", sd},
                           {"ssim_enhanced", se}});
  }
  r.psnr_dark /= n;
  r.psnr_enhanced /= n;
  r.ssim_dark /= n;
  r.ssim_enhanced /= n;
  r.gefu = gefu_evaluate(classifier, test.gt, test.low, r.enhanced, test.labels);
  r.classifier_fingerprint = classifier.fingerprint();
  return r;
}

ToyClassifier train_toy_classifier(const fs::path& classifier_dir, std::uint64_t seed) {
  const LabelledSet set = load_labelled(classifier_dir);
  ToyClassifier c(seed, static_cast<int>(shape_classes().size()));
  c.fit(set.images, set.labels);
  return c;
}

}  // namespace scuf
