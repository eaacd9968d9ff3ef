#pragma once

#include <cstdint>
#include <vector>

#include "cdupatch/image.hpp"

namespace cdupatch {

/// Where a patch goes on one target: a square of `patch_side` pixels whose top edge sits on
/// the box top and which is horizontally centred on the box.
struct Placement {
  Box target_bbox;
  int patch_side = 0;
  int left = 0;
  int top = 0;
  double coverage_cap = 0.3;

  double center_x() const noexcept { return left + patch_side / 2.0; }
  double center_y() const noexcept { return top + patch_side / 2.0; }
};

/// patch_side = min(floor(sqrt(cap * w * h)), floor(w), floor(h)).
/// Throws ParameterError for a degenerate box or a cap that yields a zero-size patch.
Placement placement_from_bbox(const Box& bbox, double coverage_cap = 0.3);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const noexcept { return 0.5 * (lo + hi); }
};

/// One draw of the physical transformation applied while pasting.
struct TransformSample {
  double rotation_deg = 0.0;  // counter-clockwise on screen
  double scale = 1.0;
  double brightness_delta = 0.0;
  double blur_sigma = 0.0;

  static TransformSample identity() { return {}; }
};

struct EotConfig {
  Range rotation_deg{-20.0, 20.0};
  Range scale{0.8, 1.2};
  Range brightness{-0.15, 0.15};
  Range blur_sigma{0.0, 1.5};

  void validate() const;
  /// All ranges collapsed onto the neutral values.
  static EotConfig identity();
};

/// Each field uniform over its range; a pure function of (cfg, seed, index).
TransformSample sample_transform(const EotConfig& cfg, std::uint64_t seed, std::uint64_t index);

/// The same draw with brightness and blur replaced by a second independent draw, used for
/// the infrared branch: geometry is shared, photometry is per sensor.
TransformSample resample_photometric(const TransformSample& geometric, const EotConfig& cfg,
                                     std::uint64_t seed, std::uint64_t index);

/// Differentiable warp of a square patch onto a canvas. The sampling table is built once in
/// the constructor; forward() can then be called for any patch of the configured shape and
/// backward() maps a canvas gradient back to the patch.
///
/// Pipeline: bilinear scale + rotation about the placement centre, brightness delta with
/// clamp to [0,1], then a Gaussian blur restricted to the covered pixels (normalised
/// convolution). The mask does not depend on patch values.
class PatchWarp {
 public:
  PatchWarp(int patch_size, int channels, const Placement& placement, const TransformSample& t,
            int canvas_h, int canvas_w);

  const Mask& mask() const noexcept { return mask_; }
  Image forward(const Image& patch);
  /// Requires a prior forward() on this object.
  Image backward(const Image& grad_canvas) const;

 private:
  struct Tap {
    std::uint32_t pixel;  // canvas pixel index y*W+x
    std::uint32_t src[4];
    double weight[4];
  };

  void blur_masked(std::vector<double>& values) const;  // in-place, channel-interleaved

  int patch_size_;
  int channels_;
  int canvas_h_;
  int canvas_w_;
  TransformSample t_;
  Mask mask_;
  std::vector<Tap> taps_;
  std::vector<double> kernel_;
  std::vector<double> blur_norm_;       // per canvas pixel, sum of kernel weights over mask
  std::vector<std::uint8_t> pass_;      // per tap*channel: brightness clamp inactive
};

struct WarpResult {
  Image canvas;
  Mask mask;
};

/// One-shot convenience wrapper around PatchWarp.
/// Throws ParameterError if the placement lies entirely outside the canvas.
WarpResult warp_patch(const Image& patch, const Placement& placement, const TransformSample& t,
                      int canvas_h, int canvas_w);

/// (1 - mask) * image + mask * patch_canvas, channel-wise. Masked-out pixels are copied
/// bit-exactly.
Image composite(const Image& image, const Image& patch_canvas, const Mask& mask);

struct CompositeGrad {
  Image image;
  Image patch_canvas;
};
CompositeGrad composite_backward(const Image& grad_output, const Mask& mask);

}  // namespace cdupatch
