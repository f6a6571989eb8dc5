#include "scuf/imaging.hpp"

#include <png.h>

#include <cmath>
#include <random>
#include <vector>

namespace scuf {

void validate_image(const Image& img, int min_side) {
  if (img.height < min_side || img.width < min_side) {
    throw ShapeError("image must be at least " + std::to_string(min_side) + "x" + std::to_string(min_side) +
                     ", got " + std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  if (img.pixels.rows() != static_cast<Eigen::Index>(img.height) * img.width || img.pixels.cols() != 3) {
    throw ShapeError("image pixel buffer does not match its declared size");
  }
  if (!img.pixels.allFinite() || img.pixels.minCoeff() < 0 || img.pixels.maxCoeff() > 1) {
    throw DataError("image values must be finite and within [0,1]");
  }
}

Matrix rgb_to_hsv(const Image& img) {
  Matrix out(img.pixels.rows(), 3);
  for (Eigen::Index i = 0; i < img.pixels.rows(); ++i) {
    out.row(i) = rgb_to_hsv_pixel(img.pixels(i, 0), img.pixels(i, 1), img.pixels(i, 2));
  }
  return out;
}

IlluminationPrompt illumination_prompt(const Image& img) {
  const Matrix hsv = rgb_to_hsv(img);
  IlluminationPrompt p;
  p.v = Eigen::Map<const Matrix>(hsv.col(2).eval().data(), img.height, img.width);
  p.v_reverse = (1.0 - p.v.array()).matrix();
  return p;
}

Image degrade(const Image& img, Real gamma, Real noise_sigma, std::uint64_t seed) {
  if (!(gamma > 0)) throw std::invalid_argument("degrade: gamma must be positive");
  if (noise_sigma < 0) throw std::invalid_argument("degrade: noise_sigma must be non-negative");
  Image out = img;
  out.pixels = img.pixels.array().pow(gamma).matrix();
  if (noise_sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> noise(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < out.pixels.size(); ++i) out.pixels.data()[i] += noise(rng);
  }
  out.pixels = out.pixels.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

Matrix gaussian_blur(const Matrix& map, Real sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<Real> kernel(2 * radius + 1);
  Real total = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (Real& k : kernel) k /= total;

  const int h = static_cast<int>(map.rows()), w = static_cast<int>(map.cols());
  Matrix tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Real acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * map(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Real acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  }
  return out;
}

ReflectanceTarget retinex_decompose(const Image& img, Real blur_sigma, Real eps) {
  if (!(blur_sigma > 0)) throw std::invalid_argument("retinex_decompose: blur_sigma must be positive");
  if (!(eps > 0 && eps <= 0.1)) throw std::invalid_argument("retinex_decompose: eps must lie in (0, 0.1]");
  const Matrix max_channel = Eigen::Map<const Matrix>(img.pixels.rowwise().maxCoeff().eval().data(), img.height, img.width);
  ReflectanceTarget out;
  out.illumination = gaussian_blur(max_channel, blur_sigma).cwiseMax(eps).cwiseMin(1.0);
  out.reflectance = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Real l = out.illumination(y, x);
      for (int c = 0; c < 3; ++c) out.reflectance.at(y, x, c) = std::clamp(img.at(y, x, c) / l, 0.0, 1.0);
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.pixels.row(static_cast<Eigen::Index>(y) * img.width + x) =
          img.pixels.row(static_cast<Eigen::Index>(y) * img.width + (img.width - 1 - x));
    }
  }
  return out;
}

Image crop(const Image& img, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > img.height || left + w > img.width) {
    throw ShapeError("crop window exceeds image bounds");
  }
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    out.pixels.middleRows(static_cast<Eigen::Index>(y) * w, w) =
        img.pixels.middleRows(static_cast<Eigen::Index>(top + y) * img.width + left, w);
  }
  return out;
}

Image resize_bilinear(const Image& img, int h, int w) {
  Image out(h, w);
  const Real sy = static_cast<Real>(img.height) / h;
  const Real sx = static_cast<Real>(img.width) / w;
  for (int y = 0; y < h; ++y) {
    const Real fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<Real>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const Real wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      const Real fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<Real>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const Real wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const Real top = (1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const Real bottom = (1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        out.at(y, x, c) = (1 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ImageIoError(ImageIoError::Kind::missing_file, "image not found: " + path.string());
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ImageIoError(ImageIoError::Kind::corrupt, "cannot decode PNG " + path.string() + ": " + msg);
  }
  if ((png.format & PNG_FORMAT_FLAG_COLOR) == 0 || (png.format & PNG_FORMAT_FLAG_ALPHA) != 0) {
    const int channels = PNG_IMAGE_SAMPLE_CHANNELS(png.format);
    png_image_free(&png);
    throw ImageIoError(ImageIoError::Kind::unsupported_channels,
                       "expected 3-channel RGB PNG, got " + std::to_string(channels) + " channel(s): " + path.string());
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ImageIoError(ImageIoError::Kind::corrupt, "cannot decode PNG " + path.string() + ": " + msg);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width));
  for (std::size_t i = 0; i < buffer.size(); ++i) img.pixels.data()[i] = buffer[i] / 255.0;
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.pixels.size()));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Real v = std::clamp(img.pixels.data()[i], 0.0, 1.0) * 255.0;
    buffer[i] = static_cast<png_byte>(std::lrint(v));  // default rounding mode: half to even
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw ImageIoError(ImageIoError::Kind::write_failed, "cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace scuf
