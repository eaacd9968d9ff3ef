#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cdupatch {

/// Dense float64 image in row-major HWC order, values nominally in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0);

  bool empty() const noexcept { return data.empty(); }
  std::size_t size() const noexcept { return data.size(); }
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c = 0) noexcept { return data[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const noexcept { return data[index(y, x, c)]; }

  bool same_shape(const Image& other) const noexcept {
    return height == other.height && width == other.width && channels == other.channels;
  }
  bool same_extent(const Image& other) const noexcept {
    return height == other.height && width == other.width;
  }
};

/// Binary per-pixel mask. Values are exactly 0 or 1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(std::size_t(h) * w, fill) {}
  std::uint8_t& at(int y, int x) noexcept { return data[std::size_t(y) * width + x]; }
  std::uint8_t at(int y, int x) const noexcept { return data[std::size_t(y) * width + x]; }
  std::size_t count() const noexcept;
};

/// Axis-aligned pixel box, corners (x1,y1) top-left and (x2,y2) bottom-right.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  bool well_ordered() const noexcept { return x2 > x1 && y2 > y1; }
  bool operator==(const Box&) const = default;
};

struct LabeledBox {
  int class_id = 0;
  Box box;
  bool operator==(const LabeledBox&) const = default;
};

/// Aligned visible / infrared sample with its ground truth.
struct ImagePair {
  std::string id;
  Image visible;   // H x W x 3
  Image infrared;  // H x W x 1
  std::vector<LabeledBox> boxes;

  int height() const noexcept { return visible.height; }
  int width() const noexcept { return visible.width; }
};

/// Throws ShapeError unless the pair is aligned and its boxes lie inside the frame.
void validate_pair(const ImagePair& pair);

/// Separable Gaussian blur with clamp-to-edge borders. sigma <= 0 returns a copy.
Image gaussian_blur(const Image& img, double sigma);

/// Normalised 1-D Gaussian taps, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Bilinear resample of the window [x0,x0+w) x [y0,y0+h) into an out_h x out_w image.
Image resample_window(const Image& img, double x0, double y0, double w, double h, int out_h,
                      int out_w);

/// Copy of a single channel as a 1-channel image.
Image extract_channel(const Image& img, int channel);

/// FNV-1a over the raw bytes of the pixel buffer.
std::uint64_t checksum(const Image& img);

}  // namespace cdupatch
