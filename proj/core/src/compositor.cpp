#include "cdupatch/compositor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "cdupatch/errors.hpp"

namespace cdupatch {
namespace {

double draw(std::mt19937_64& rng, const Range& r) {
  const double u = std::generate_canonical<double, 53>(rng);
  return r.lo + (r.hi - r.lo) * u;
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream};
  return std::mt19937_64(seq);
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi)) throw ParameterError(std::string("EOT range '") + name + "' is not ordered");
}

}  // namespace

Placement placement_from_bbox(const Box& bbox, double coverage_cap) {
  if (!bbox.well_ordered()) throw ParameterError("placement needs a box with positive width and height");
  if (!(coverage_cap > 0.0 && coverage_cap <= 1.0)) {
    throw ParameterError("coverage cap must lie in (0,1]");
  }
  const double w = bbox.width(), h = bbox.height();
  int side = static_cast<int>(std::floor(std::sqrt(coverage_cap * w * h)));
  side = std::min({side, static_cast<int>(std::floor(w)), static_cast<int>(std::floor(h))});
  if (side < 1) throw ParameterError("coverage cap yields a zero-size patch for this box");
  Placement p;
  p.target_bbox = bbox;
  p.patch_side = side;
  p.coverage_cap = coverage_cap;
  p.left = static_cast<int>(std::floor(bbox.x1 + (w - side) / 2.0 + 0.5));
  p.top = static_cast<int>(std::floor(bbox.y1 + 0.5));
  return p;
}

void EotConfig::validate() const {
  check_range(rotation_deg, "rotation");
  check_range(scale, "scale");
  check_range(brightness, "brightness");
  check_range(blur_sigma, "blur_sigma");
  if (scale.lo <= 0.0) throw ParameterError("EOT scale range must be positive");
  if (blur_sigma.lo < 0.0) throw ParameterError("EOT blur range must be non-negative");
}

EotConfig EotConfig::identity() {
  return EotConfig{{0.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}};
}

TransformSample sample_transform(const EotConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  cfg.validate();
  auto rng = seeded(seed, index, 0);
  TransformSample t;
  t.rotation_deg = draw(rng, cfg.rotation_deg);
  t.scale = draw(rng, cfg.scale);
  t.brightness_delta = draw(rng, cfg.brightness);
  t.blur_sigma = draw(rng, cfg.blur_sigma);
  return t;
}

TransformSample resample_photometric(const TransformSample& geometric, const EotConfig& cfg,
                                     std::uint64_t seed, std::uint64_t index) {
  cfg.validate();
  auto rng = seeded(seed, index, 1);
  TransformSample t = geometric;
  t.brightness_delta = draw(rng, cfg.brightness);
  t.blur_sigma = draw(rng, cfg.blur_sigma);
  return t;
}

PatchWarp::PatchWarp(int patch_size, int channels, const Placement& placement,
                     const TransformSample& t, int canvas_h, int canvas_w)
    : patch_size_(patch_size), channels_(channels), canvas_h_(canvas_h), canvas_w_(canvas_w),
      t_(t), mask_(canvas_h, canvas_w, 0) {
  if (patch_size < 1 || channels < 1) throw ShapeError("patch must be non-empty");
  if (canvas_h < 1 || canvas_w < 1) throw ShapeError("canvas must be non-empty");
  if (!(t.scale > 0)) throw ParameterError("transform scale must be positive");
  if (placement.patch_side < 1) throw ParameterError("placement has zero size");

  const double side = placement.patch_side * t.scale;
  const double rad = t.rotation_deg * std::numbers::pi / 180.0;
  const double cs = t.rotation_deg == 0.0 ? 1.0 : std::cos(rad);
  const double sn = t.rotation_deg == 0.0 ? 0.0 : std::sin(rad);
  const double cx = placement.center_x(), cy = placement.center_y();
  const double ratio = patch_size / side;
  const double half_extent = 0.5 * side * (std::abs(cs) + std::abs(sn)) + 1.0;

  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - half_extent)));
  const int y_hi = std::min(canvas_h - 1, static_cast<int>(std::ceil(cy + half_extent)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - half_extent)));
  const int x_hi = std::min(canvas_w - 1, static_cast<int>(std::ceil(cx + half_extent)));
  const double S = patch_size;

  for (int v = y_lo; v <= y_hi; ++v) {
    for (int u = x_lo; u <= x_hi; ++u) {
      const double dx = (u + 0.5) - cx;
      const double dy = (v + 0.5) - cy;
      // Inverse of the on-screen counter-clockwise rotation (y axis points down).
      const double px = cs * dx - sn * dy;
      const double py = sn * dx + cs * dy;
      const double sx = px * ratio + S / 2.0 - 0.5;
      const double sy = py * ratio + S / 2.0 - 0.5;
      if (sx < -0.5 || sx >= S - 0.5 || sy < -0.5 || sy >= S - 0.5) continue;

      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double fx = sx - fx0, fy = sy - fy0;
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const int xa = std::clamp(x0, 0, patch_size - 1), xb = std::clamp(x0 + 1, 0, patch_size - 1);
      const int ya = std::clamp(y0, 0, patch_size - 1), yb = std::clamp(y0 + 1, 0, patch_size - 1);
      Tap tap;
      tap.pixel = static_cast<std::uint32_t>(v * canvas_w + u);
      tap.src[0] = static_cast<std::uint32_t>(ya * patch_size + xa);
      tap.src[1] = static_cast<std::uint32_t>(ya * patch_size + xb);
      tap.src[2] = static_cast<std::uint32_t>(yb * patch_size + xa);
      tap.src[3] = static_cast<std::uint32_t>(yb * patch_size + xb);
      tap.weight[0] = (1 - fx) * (1 - fy);
      tap.weight[1] = fx * (1 - fy);
      tap.weight[2] = (1 - fx) * fy;
      tap.weight[3] = fx * fy;
      taps_.push_back(tap);
      mask_.at(v, u) = 1;
    }
  }
  if (taps_.empty()) throw ParameterError("patch placement lies entirely outside the canvas");

  if (t.blur_sigma > 0) {
    kernel_ = gaussian_kernel(t.blur_sigma);
    blur_norm_.assign(std::size_t(canvas_h) * canvas_w, 0.0);
    std::vector<double> ones(std::size_t(canvas_h) * canvas_w, 0.0);
    for (const Tap& tap : taps_) ones[tap.pixel] = 1.0;
    // Reuse the channel-interleaved blur with a single channel.
    const int saved = channels_;
    channels_ = 1;
    std::vector<double> denom = ones;
    blur_norm_.assign(ones.size(), 1.0);  // identity normalisation while computing the denominator
    blur_masked(denom);
    channels_ = saved;
    blur_norm_ = std::move(denom);
  }
}

// Zero-padded separable Gaussian of the interleaved canvas values, restricted to mask pixels,
// divided by blur_norm_. Values outside the mask are treated as 0 and written as 0.
void PatchWarp::blur_masked(std::vector<double>& values) const {
  const int r = static_cast<int>(kernel_.size() / 2);
  const int H = canvas_h_, W = canvas_w_, C = channels_;
  std::vector<double> tmp(values.size(), 0.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int xx = x + i;
          if (xx < 0 || xx >= W) continue;
          acc += kernel_[i + r] * values[(std::size_t(y) * W + xx) * C + c];
        }
        tmp[(std::size_t(y) * W + x) * C + c] = acc;
      }
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t px = std::size_t(y) * W + x;
      for (int c = 0; c < C; ++c) {
        if (!mask_.data[px]) {
          values[px * C + c] = 0.0;
          continue;
        }
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int yy = y + i;
          if (yy < 0 || yy >= H) continue;
          acc += kernel_[i + r] * tmp[(std::size_t(yy) * W + x) * C + c];
        }
        values[px * C + c] = acc / blur_norm_[px];
      }
    }
  }
}

Image PatchWarp::forward(const Image& patch) {
  if (patch.height != patch_size_ || patch.width != patch_size_ || patch.channels != channels_) {
    throw ShapeError("patch shape does not match the warp");
  }
  const int C = channels_;
  std::vector<double> values(std::size_t(canvas_h_) * canvas_w_ * C, 0.0);
  pass_.assign(taps_.size() * C, 0);
  for (std::size_t k = 0; k < taps_.size(); ++k) {
    const Tap& tap = taps_[k];
    for (int c = 0; c < C; ++c) {
      double v = 0.0;
      for (int j = 0; j < 4; ++j) v += tap.weight[j] * patch.data[std::size_t(tap.src[j]) * C + c];
      v += t_.brightness_delta;
      pass_[k * C + c] = (v >= 0.0 && v <= 1.0) ? 1 : 0;
      values[std::size_t(tap.pixel) * C + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  if (!kernel_.empty()) blur_masked(values);
  Image canvas(canvas_h_, canvas_w_, C);
  canvas.data = std::move(values);
  return canvas;
}

Image PatchWarp::backward(const Image& grad_canvas) const {
  if (grad_canvas.height != canvas_h_ || grad_canvas.width != canvas_w_ || grad_canvas.channels != channels_) {
    throw ShapeError("canvas gradient shape does not match the warp");
  }
  if (pass_.size() != taps_.size() * channels_) throw ParameterError("PatchWarp::backward before forward");
  const int C = channels_;
  std::vector<double> g(grad_canvas.data.size(), 0.0);
  for (const Tap& tap : taps_)
    for (int c = 0; c < C; ++c) g[std::size_t(tap.pixel) * C + c] = grad_canvas.data[std::size_t(tap.pixel) * C + c];
  if (!kernel_.empty()) {
    // The blur matrix is K diag(1/norm) restricted to the mask; its transpose is
    // diag(1/norm) K with K symmetric, i.e. scale first, then convolve.
    for (std::size_t px = 0; px < blur_norm_.size(); ++px) {
      if (!mask_.data[px]) continue;
      for (int c = 0; c < C; ++c) g[px * C + c] /= blur_norm_[px];
    }
    const int r = static_cast<int>(kernel_.size() / 2);
    const int H = canvas_h_, W = canvas_w_;
    std::vector<double> tmp(g.size(), 0.0), out(g.size(), 0.0);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int i = -r; i <= r; ++i) {
            const int xx = x + i;
            if (xx >= 0 && xx < W) acc += kernel_[i + r] * g[(std::size_t(y) * W + xx) * C + c];
          }
          tmp[(std::size_t(y) * W + x) * C + c] = acc;
        }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t px = std::size_t(y) * W + x;
        if (!mask_.data[px]) continue;
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int i = -r; i <= r; ++i) {
            const int yy = y + i;
            if (yy >= 0 && yy < H) acc += kernel_[i + r] * tmp[(std::size_t(yy) * W + x) * C + c];
          }
          out[px * C + c] = acc;
        }
      }
    g = std::move(out);
  }
  Image grad_patch(patch_size_, patch_size_, C);
  for (std::size_t k = 0; k < taps_.size(); ++k) {
    const Tap& tap = taps_[k];
    for (int c = 0; c < C; ++c) {
      if (!pass_[k * C + c]) continue;
      const double gv = g[std::size_t(tap.pixel) * C + c];
      if (gv == 0.0) continue;
      for (int j = 0; j < 4; ++j) grad_patch.data[std::size_t(tap.src[j]) * C + c] += tap.weight[j] * gv;
    }
  }
  return grad_patch;
}

WarpResult warp_patch(const Image& patch, const Placement& placement, const TransformSample& t,
                      int canvas_h, int canvas_w) {
  if (patch.height != patch.width) throw ShapeError("patch must be square");
  if (patch.channels != 1 && patch.channels != 3) throw ShapeError("patch must have 1 or 3 channels");
  PatchWarp warp(patch.height, patch.channels, placement, t, canvas_h, canvas_w);
  Image canvas = warp.forward(patch);
  return {std::move(canvas), warp.mask()};
}

Image composite(const Image& image, const Image& patch_canvas, const Mask& mask) {
  if (!image.same_shape(patch_canvas)) throw ShapeError("composite: image and patch canvas shapes differ");
  if (mask.height != image.height || mask.width != image.width) throw ShapeError("composite: mask size differs");
  Image out = image;
  const int C = image.channels;
  for (std::size_t px = 0; px < mask.data.size(); ++px) {
    const std::uint8_t m = mask.data[px];
    if (m > 1) throw ParameterError("composite: mask is not binary");
    if (m == 0) continue;
    for (int c = 0; c < C; ++c) out.data[px * C + c] = patch_canvas.data[px * C + c];
  }
  return out;
}

CompositeGrad composite_backward(const Image& grad_output, const Mask& mask) {
  if (mask.height != grad_output.height || mask.width != grad_output.width) {
    throw ShapeError("composite_backward: mask size differs");
  }
  CompositeGrad g{grad_output, Image(grad_output.height, grad_output.width, grad_output.channels)};
  const int C = grad_output.channels;
  for (std::size_t px = 0; px < mask.data.size(); ++px) {
    if (!mask.data[px]) continue;
    for (int c = 0; c < C; ++c) {
      g.patch_canvas.data[px * C + c] = grad_output.data[px * C + c];
      g.image.data[px * C + c] = 0.0;
    }
  }
  return g;
}

}  // namespace cdupatch
