#include "cdupatch/raster_plot.hpp"

#include <algorithm>
#include <cmath>

#include "cdupatch/errors.hpp"

namespace cdupatch::plot {
namespace {

void put(Image& img, int x, int y, const Color& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
}

void line(Image& img, int x0, int y0, int x1, int y1, const Color& c, int thickness) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  const int r = thickness / 2;
  while (true) {
    for (int oy = -r; oy <= r; ++oy)
      for (int ox = -r; ox <= r; ++ox) put(img, x0 + ox, y0 + oy, c);
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

}  // namespace

Image line_chart(const std::vector<Series>& series, double x_lo, double x_hi, double y_lo, double y_hi, int height,
                 int width) {
  if (!(x_hi > x_lo) || !(y_hi > y_lo)) throw ParameterError("plot axis range is empty");
  if (height < 32 || width < 32) throw ParameterError("plot is too small");
  Image img(height, width, 3, 1.0);
  const int margin = 16;
  const int pw = width - 2 * margin, ph = height - 2 * margin;
  auto px = [&](double x) { return margin + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * pw)); };
  auto py = [&](double y) { return margin + ph - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * ph)); };
  const Color grid{0.88, 0.88, 0.88}, axis{0.2, 0.2, 0.2};
  for (int i = 0; i <= 4; ++i) {
    const int gx = margin + pw * i / 4, gy = margin + ph * i / 4;
    line(img, gx, margin, gx, margin + ph, grid, 1);
    line(img, margin, gy, margin + pw, gy, grid, 1);
  }
  line(img, margin, margin + ph, margin + pw, margin + ph, axis, 1);
  line(img, margin, margin, margin, margin + ph, axis, 1);
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("plot series x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = std::clamp(s.y[i], y_lo, y_hi);
      if (i > 0) line(img, px(s.x[i - 1]), py(std::clamp(s.y[i - 1], y_lo, y_hi)), px(s.x[i]), py(y), s.color, 2);
      line(img, px(s.x[i]) - 2, py(y), px(s.x[i]) + 2, py(y), s.color, 3);
    }
  }
  return img;
}

Image heatmap(const std::vector<std::vector<double>>& values, double lo, double hi, int cell) {
  if (values.empty() || values[0].empty()) throw ParameterError("heatmap of an empty matrix");
  if (!(hi > lo) || cell < 1) throw ParameterError("invalid heatmap range or cell size");
  const int rows = int(values.size()), cols = int(values[0].size());
  Image img(rows * cell, cols * cell, 3, 1.0);
  for (int r = 0; r < rows; ++r) {
    if (int(values[r].size()) != cols) throw ShapeError("heatmap rows differ in length");
    for (int c = 0; c < cols; ++c) {
      const double t = std::clamp((values[r][c] - lo) / (hi - lo), 0.0, 1.0);
      const Color col{t, 0.15, 1.0 - t};
      for (int y = 1; y < cell - 1; ++y)
        for (int x = 1; x < cell - 1; ++x) put(img, c * cell + x, r * cell + y, col);
    }
  }
  return img;
}

Image hstack(const std::vector<Image>& images, int gap) {
  if (images.empty()) throw ParameterError("hstack of no images");
  int h = 0, w = 0;
  for (const auto& im : images) {
    if (im.channels != 1 && im.channels != 3) throw ShapeError("hstack expects 1- or 3-channel images");
    h = std::max(h, im.height);
    w += im.width;
  }
  w += gap * int(images.size() - 1);
  Image out(h, w, 3, 1.0);
  int x0 = 0;
  for (const auto& im : images) {
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x)
        for (int k = 0; k < 3; ++k) out.at(y, x0 + x, k) = im.at(y, x, im.channels == 3 ? k : 0);
    x0 += im.width + gap;
  }
  return out;
}

}  // namespace cdupatch::plot
