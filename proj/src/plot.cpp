#include "scuf/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace scuf {
namespace {

using Color = std::array<Real, 3>;

const std::map<char, const char*>& glyphs() {
  static const std::map<char, const char*> g{
      {'0', "111101101101111"}, {'1', "010110010010111"}, {'2', "111001111100111"}, {'3', "111001111001111"},
      {'4', "101101111001001"}, {'5', "111100111001111"}, {'6', "111100111101111"}, {'7', "111001001001001"},
      {'8', "111101111101111"}, {'9', "111101111001111"}, {'A', "010101111101101"}, {'B', "110101110101110"},
      {'C', "011100100100011"}, {'D', "110101101101110"}, {'E', "111100110100111"}, {'F', "111100110100100"},
      {'G', "011100101101011"}, {'H', "101101111101101"}, {'I', "111010010010111"}, {'J', "001001001101010"},
      {'K', "101101110101101"}, {'L', "100100100100111"}, {'M', "101111111101101"}, {'N', "110101101101101"},
      {'O', "010101101101010"}, {'P', "110101110100100"}, {'Q', "010101101110011"}, {'R', "110101110101101"},
      {'S', "011100010001110"}, {'T', "111010010010010"}, {'U', "101101101101111"}, {'V', "101101101101010"},
      {'W', "101101111111101"}, {'X', "101101010101101"}, {'Y', "101101010010010"}, {'Z', "111001010100111"},
      {'.', "000000000000010"}, {'-', "000000111000000"}, {'_', "000000000000111"}, {':', "000010000010000"},
      {'=', "000111000111000"}, {'/', "001001010100100"}, {'(', "010100100100010"}, {')', "010001001001010"},
      {'+', "000010111010000"}, {'%', "101001010100101"}, {',', "000000000010100"},
  };
  return g;
}

const std::vector<Color>& series_colors() {
  static const std::vector<Color> c{{0.12, 0.47, 0.71}, {0.84, 0.15, 0.16}, {0.17, 0.63, 0.17},
                                    {1.0, 0.5, 0.05},   {0.58, 0.4, 0.74},  {0.55, 0.34, 0.29},
                                    {0.89, 0.47, 0.76}, {0.5, 0.5, 0.5},    {0.74, 0.74, 0.13}};
  return c;
}

void put(Image& img, int x, int y, const Color& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch];
}

void line(Image& img, int x0, int y0, int x1, int y1, const Color& c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void fill(Image& img, int x, int y, int w, int h, const Color& c) {
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) put(img, xx, yy, c);
}

std::string format_value(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void draw_text(Image& canvas, int x, int y, const std::string& text, const Color& color, int scale) {
  int cursor = x;
  for (char raw : text) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    const auto it = glyphs().find(ch);
    if (it != glyphs().end()) {
      for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 3; ++col)
          if (it->second[row * 3 + col] == '1') fill(canvas, cursor + col * scale, y + row * scale, scale, scale, color);
    }
    cursor += 4 * scale;
  }
}

std::vector<Real> moving_average(const std::vector<Real>& values, int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
  std::vector<Real> out(values.size());
  Real acc = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= static_cast<std::size_t>(window)) acc -= values[i - window];
    out[i] = acc / static_cast<Real>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

Image render_line_plot(const std::vector<Series>& series, const std::string& title, int width, int height) {
  Image img = Image::constant(height, width, 1.0);
  const Color black{0, 0, 0};
  const Color grey{0.85, 0.85, 0.85};
  const int left = 70, right = 180, top = 30, bottom = 30;
  const int pw = width - left - right, ph = height - top - bottom;
  draw_text(img, left, 8, title, black);

  Real lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const Series& s : series) {
    for (Real v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, s.values.size());
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) hi = lo + 1;

  for (int k = 0; k <= 4; ++k) line(img, left, top + k * ph / 4, left + pw, top + k * ph / 4, grey);
  line(img, left, top, left, top + ph, black);
  line(img, left, top + ph, left + pw, top + ph, black);
  draw_text(img, 4, top - 4, format_value(hi), black);
  draw_text(img, 4, top + ph - 6, format_value(lo), black);
  draw_text(img, left, top + ph + 8, "0", black);
  draw_text(img, left + pw - 40, top + ph + 8, std::to_string(n > 0 ? n - 1 : 0), black);

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Color& c = series_colors()[si % series_colors().size()];
    const auto& v = series[si].values;
    auto px = [&](std::size_t i) { return left + static_cast<int>(std::lround(n > 1 ? Real(i) * pw / (n - 1) : 0)); };
    auto py = [&](Real y) { return top + static_cast<int>(std::lround((hi - y) / (hi - lo) * ph)); };
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (!std::isfinite(v[i - 1]) || !std::isfinite(v[i])) continue;
      line(img, px(i - 1), py(v[i - 1]), px(i), py(v[i]), c);
    }
    const int ly = top + 4 + static_cast<int>(si) * 16;
    fill(img, left + pw + 12, ly, 14, 8, c);
    draw_text(img, left + pw + 32, ly - 1, series[si].name, black);
  }
  return img;
}

void save_line_plot(const std::vector<Series>& series, const std::string& title, const std::filesystem::path& path) {
  save_image(render_line_plot(series, title), path);
}

Image render_grid(const std::vector<std::vector<Image>>& rows, int scale) {
  if (rows.empty() || rows.front().empty()) throw std::invalid_argument("render_grid: no images");
  const int h = rows.front().front().height, w = rows.front().front().width;
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  const int gutter = 2;
  Image out = Image::constant(static_cast<int>(rows.size()) * (h * scale + gutter) + gutter,
                              static_cast<int>(cols) * (w * scale + gutter) + gutter, 1.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const Image& img = rows[r][c];
      if (img.height != h || img.width != w) throw ShapeError("render_grid: images must share one size");
      const int oy = gutter + static_cast<int>(r) * (h * scale + gutter);
      const int ox = gutter + static_cast<int>(c) * (w * scale + gutter);
      for (int y = 0; y < h * scale; ++y)
        for (int x = 0; x < w * scale; ++x)
          for (int ch = 0; ch < 3; ++ch) out.at(oy + y, ox + x, ch) = img.at(y / scale, x / scale, ch);
    }
  }
  return out;
}

}  // namespace scuf
