#include "cdupatch/adversarial_losses.hpp"

#include <cmath>

#include "cdupatch/errors.hpp"

namespace cdupatch {

void LossWeights::validate() const {
  if (!(gamma >= 0.0) || !(delta >= 0.0) || !std::isfinite(gamma) || !std::isfinite(delta)) {
    throw ParameterError("loss weights must be finite and non-negative");
  }
}

double tv_loss(const Image& patch, Image* grad) {
  if (patch.empty()) throw ShapeError("tv_loss of an empty patch");
  const int H = patch.height, W = patch.width, C = patch.channels;
  if (grad) *grad = Image(H, W, C);
  double total = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        const double v = patch.at(y, x, c);
        const double dv = y + 1 < H ? v - patch.at(y + 1, x, c) : 0.0;
        const double dh = x + 1 < W ? v - patch.at(y, x + 1, c) : 0.0;
        const double r = std::sqrt(dv * dv + dh * dh);
        total += r;
        if (!grad || r == 0.0) continue;
        grad->at(y, x, c) += (dv + dh) / r;
        if (y + 1 < H) grad->at(y + 1, x, c) -= dv / r;
        if (x + 1 < W) grad->at(y, x + 1, c) -= dh / r;
      }
    }
  }
  return total;
}

double ap_loss(std::span<const double> scores) {
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (double v : scores) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("detection score outside [0,1]");
    s += v;
  }
  return s / static_cast<double>(scores.size());
}

namespace {
double tv_scale(const Image& patch, TvReduction reduction) {
  return reduction == TvReduction::kMean ? 1.0 / static_cast<double>(patch.size()) : 1.0;
}
}  // namespace

AdvLossTerms adv_loss(const Image& patch, std::span<const double> scores_visible,
                      std::span<const double> scores_infrared, const LossWeights& w,
                      TvReduction reduction) {
  w.validate();
  AdvLossTerms t;
  t.tv = tv_loss(patch);
  const std::size_t n = scores_visible.size() + scores_infrared.size();
  double sum = 0.0;
  if (n > 0) {
    // Mean over the concatenation, validating each score.
    sum += ap_loss(scores_visible) * static_cast<double>(scores_visible.size());
    sum += ap_loss(scores_infrared) * static_cast<double>(scores_infrared.size());
    t.ap = sum / static_cast<double>(n);
  }
  t.n_scores = n;
  t.total = w.gamma * tv_scale(patch, reduction) * t.tv + w.delta * t.ap;
  return t;
}

AdvLossGrad adv_loss_gradient(const Image& patch, std::size_t n_scores, const LossWeights& w,
                              TvReduction reduction) {
  w.validate();
  AdvLossGrad g;
  tv_loss(patch, &g.patch);
  const double k = w.gamma * tv_scale(patch, reduction);
  for (double& v : g.patch.data) v *= k;
  g.per_score = n_scores > 0 ? w.delta / static_cast<double>(n_scores) : 0.0;
  return g;
}

}  // namespace cdupatch
