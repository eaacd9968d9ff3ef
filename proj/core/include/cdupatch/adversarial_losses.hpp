#pragma once

#include <span>
#include <vector>

#include "cdupatch/image.hpp"

namespace cdupatch {

struct LossWeights {
  double gamma = 2.5;  // total-variation weight
  double delta = 1.0;  // detection-score weight

  void validate() const;
};

/// How the total-variation term enters the combined objective.
enum class TvReduction {
  kSum,   // the plain sum over pixels and channels
  kMean,  // the sum divided by H * W * C
};

/// Sum over channels and pixels of sqrt((I[i,j]-I[i+1,j])^2 + (I[i,j]-I[i,j+1])^2). Neighbour
/// differences that fall outside the patch are taken as 0. If `grad` is non-null it receives
/// dTV/dI (subgradient 0 where both differences vanish).
double tv_loss(const Image& patch, Image* grad = nullptr);

/// Mean of the scores; 0 for an empty set. Throws ParameterError for a score outside [0,1].
double ap_loss(std::span<const double> scores);

struct AdvLossTerms {
  double tv = 0.0;     // tv_loss, before reduction
  double ap = 0.0;     // ap_loss over both branches
  double total = 0.0;  // gamma * reduce(tv) + delta * ap
  std::size_t n_scores = 0;
};

/// gamma * tv_loss(patch) + delta * ap_loss(visible ++ infrared).
AdvLossTerms adv_loss(const Image& patch, std::span<const double> scores_visible,
                      std::span<const double> scores_infrared, const LossWeights& w = {},
                      TvReduction reduction = TvReduction::kSum);

/// Gradient of adv_loss with respect to the patch and to each score.
struct AdvLossGrad {
  Image patch;
  double per_score = 0.0;  // identical for every score: delta / N
};
AdvLossGrad adv_loss_gradient(const Image& patch, std::size_t n_scores, const LossWeights& w,
                              TvReduction reduction = TvReduction::kSum);

}  // namespace cdupatch
