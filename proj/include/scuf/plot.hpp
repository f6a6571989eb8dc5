#pragma once

#include "scuf/imaging.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace scuf {

struct Series {
  std::string name;
  std::vector<Real> values;
};

// Trailing moving average with a window of at most `window` samples.
std::vector<Real> moving_average(const std::vector<Real>& values, int window);

// Raster line chart with axes, min/max tick labels and a legend, written as PNG.
Image render_line_plot(const std::vector<Series>& series, const std::string& title, int width = 720,
                       int height = 420);
void save_line_plot(const std::vector<Series>& series, const std::string& title, const std::filesystem::path& path);

// Rows of equally sized images tiled with a 2-pixel gutter and upscaled by `scale`.
Image render_grid(const std::vector<std::vector<Image>>& rows, int scale = 2);

// Draws upper-case text with a 3x5 bitmap font; lower case is folded to upper case.
void draw_text(Image& canvas, int x, int y, const std::string& text, const std::array<Real, 3>& color,
               int scale = 2);

}  // namespace scuf
