#pragma once

#include "scuf/errors.hpp"
#include "scuf/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>

namespace scuf {

// H x W x 3 raster in [0,1], stored as (H*W) x 3 with pixels in raster order.
struct Image {
  int height = 0;
  int width = 0;
  Matrix pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(Matrix::Zero(static_cast<Eigen::Index>(h) * w, 3)) {}

  static Image constant(int h, int w, Real v) {
    Image img(h, w);
    img.pixels.setConstant(v);
    return img;
  }

  Real& at(int y, int x, int c) { return pixels(static_cast<Eigen::Index>(y) * width + x, c); }
  Real at(int y, int x, int c) const { return pixels(static_cast<Eigen::Index>(y) * width + x, c); }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// Throws ShapeError/DataError unless the image is at least min_side on each side with finite values in [0,1].
void validate_image(const Image& img, int min_side = 8);

// Hexcone HSV of one pixel: hue in degrees [0,360), saturation and value in [0,1].
template <typename Scalar>
Eigen::Matrix<Scalar, 1, 3> rgb_to_hsv_pixel(Scalar r, Scalar g, Scalar b) {
  const Scalar v = std::max({r, g, b});
  const Scalar mn = std::min({r, g, b});
  const Scalar chroma = v - mn;
  const Scalar s = v > Scalar(0) ? chroma / v : Scalar(0);
  Scalar h = 0;
  if (chroma > Scalar(0)) {
    if (v == r) {
      h = Scalar(60) * ((g - b) / chroma);
    } else if (v == g) {
      h = Scalar(60) * ((b - r) / chroma + Scalar(2));
    } else {
      h = Scalar(60) * ((r - g) / chroma + Scalar(4));
    }
    if (h < Scalar(0)) h += Scalar(360);
    if (h >= Scalar(360)) h -= Scalar(360);
  }
  return {h, s, v};
}

// (H*W) x 3 matrix of (hue, saturation, value) per pixel.
Matrix rgb_to_hsv(const Image& img);

// V-channel map and its complement, each H x W.
struct IlluminationPrompt {
  Matrix v;
  Matrix v_reverse;
};

IlluminationPrompt illumination_prompt(const Image& img);

// clip(img^gamma + N(0, noise_sigma^2), 0, 1), deterministic in `seed`.
Image degrade(const Image& img, Real gamma, Real noise_sigma, std::uint64_t seed);

struct ReflectanceTarget {
  Image reflectance;
  Matrix illumination;  // H x W in [eps, 1]
};

// Separable Gaussian blur with clamp-to-edge borders; constant maps are preserved.
Matrix gaussian_blur(const Matrix& map, Real sigma);

ReflectanceTarget retinex_decompose(const Image& img, Real blur_sigma = 5.0, Real eps = 0.01);

Image flip_horizontal(const Image& img);
Image crop(const Image& img, int top, int left, int h, int w);
Image resize_bilinear(const Image& img, int h, int w);

class ImageIoError : public DataError {
 public:
  enum class Kind { missing_file, corrupt, unsupported_channels, write_failed };
  ImageIoError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// 8-bit RGB PNG. Decoding divides by 255; encoding rounds half-to-even.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

}  // namespace scuf
