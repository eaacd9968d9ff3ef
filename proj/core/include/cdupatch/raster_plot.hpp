#pragma once

#include <array>
#include <string>
#include <vector>

#include "cdupatch/image.hpp"

namespace cdupatch::plot {

using Color = std::array<double, 3>;

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  Color color{0.0, 0.0, 0.0};
};

/// Line chart on a white canvas with light grid lines; axes span [x_lo,x_hi] x [y_lo,y_hi].
Image line_chart(const std::vector<Series>& series, double x_lo, double x_hi, double y_lo,
                 double y_hi, int height = 240, int width = 320);

/// Heatmap of values in [lo, hi], one square block per cell, blue (lo) to red (hi).
Image heatmap(const std::vector<std::vector<double>>& values, double lo, double hi, int cell = 48);

/// Places images side by side on a white strip (1-channel inputs are expanded to gray RGB).
Image hstack(const std::vector<Image>& images, int gap = 4);

}  // namespace cdupatch::plot
