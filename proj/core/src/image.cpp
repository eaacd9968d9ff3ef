#include "cdupatch/image.hpp"

#include <algorithm>
#include <cmath>

#include "cdupatch/errors.hpp"
#include "cdupatch/hashing.hpp"

namespace cdupatch {

Image::Image(int h, int w, int c, double fill) : height(h), width(w), channels(c) {
  if (h < 0 || w < 0 || c < 0) throw ShapeError("negative image dimension");
  data.assign(std::size_t(h) * w * c, fill);
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

void validate_pair(const ImagePair& pair) {
  if (pair.visible.channels != 3) throw ShapeError(pair.id + ": visible image must have 3 channels");
  if (pair.infrared.channels != 1) throw ShapeError(pair.id + ": infrared image must have 1 channel");
  if (!pair.visible.same_extent(pair.infrared)) {
    throw ShapeError(pair.id + ": visible and infrared sizes differ");
  }
  for (const auto& lb : pair.boxes) {
    const Box& b = lb.box;
    if (!b.well_ordered() || b.x1 < 0 || b.y1 < 0 || b.x2 > pair.width() || b.y2 > pair.height()) {
      throw ShapeError(pair.id + ": box outside the image or degenerate");
    }
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0 || img.empty()) return img;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int H = img.height, W = img.width, C = img.channels;
  Image tmp(H, W, C), out(H, W, C);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int xx = std::clamp(x + i, 0, W - 1);
          acc += k[i + r] * img.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int yy = std::clamp(y + i, 0, H - 1);
          acc += k[i + r] * tmp.at(yy, x, c);
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

Image resample_window(const Image& img, double x0, double y0, double w, double h, int out_h,
                      int out_w) {
  if (out_h <= 0 || out_w <= 0 || w <= 0 || h <= 0) throw ShapeError("empty resample window");
  Image out(out_h, out_w, img.channels);
  const double sx = w / out_w, sy = h / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp(y0 + (oy + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y_lo = static_cast<int>(std::floor(fy));
    const int y_hi = std::min(y_lo + 1, img.height - 1);
    const double wy = fy - y_lo;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp(x0 + (ox + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x_lo = static_cast<int>(std::floor(fx));
      const int x_hi = std::min(x_lo + 1, img.width - 1);
      const double wx = fx - x_lo;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - wx) * img.at(y_lo, x_lo, c) + wx * img.at(y_lo, x_hi, c);
        const double bot = (1 - wx) * img.at(y_hi, x_lo, c) + wx * img.at(y_hi, x_hi, c);
        out.at(oy, ox, c) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

Image extract_channel(const Image& img, int channel) {
  if (channel < 0 || channel >= img.channels) throw ShapeError("channel out of range");
  Image out(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, x, channel);
  return out;
}

std::uint64_t checksum(const Image& img) {
  std::uint64_t h = fnv1a_values(std::span<const int>(&img.height, 1));
  h = fnv1a_values(std::span<const int>(&img.width, 1), h);
  h = fnv1a_values(std::span<const int>(&img.channels, 1), h);
  return fnv1a_values(std::span<const double>(img.data), h);
}

}  // namespace cdupatch
