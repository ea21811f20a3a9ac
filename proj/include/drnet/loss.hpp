#pragma once

#include <array>
#include <utility>

#include "drnet/decoder.hpp"

namespace drnet {

struct LossConfig {
  real_t alpha = static_cast<real_t>(0.5);  // F(x) = ln(x + alpha)
  std::array<real_t, 6> level_weights{1, 1, 1, 1, 1, 1};  // indexed by level

  void validate() const;
};

struct LossBreakdown {
  struct Term {
    double depth = 0;
    double grad = 0;
    double normal = 0;
    bool present = false;
  };
  std::array<Term, 6> level;  // indexed by level 5..0
  double total_value = 0;
  Tensor total;  // scalar tensor for backward()
};

// 3x3 Sobel responses over a single-channel map, replicate-padded and divided
// by 8 so a unit-slope ramp yields gradient 1. Maps smaller than the stencil
// fall back to the clamped neighborhood (zero response in the 1x1 limit).
std::pair<Tensor, Tensor> sobel_gradients(const Tensor& x);

// mean ln(|d - g| + alpha)
Tensor depth_loss(const Tensor& d, const Tensor& g, real_t alpha);

// mean [ ln(|∇x e| + alpha) + ln(|∇y e| + alpha) ] with e = |d - g|
Tensor grad_loss(const Tensor& d, const Tensor& g, real_t alpha);

// mean (1 - cos(n_d, n_g)) with n = [-∇x, -∇y, 1]
Tensor normal_loss(const Tensor& d, const Tensor& g);

// Non-overlapping average pooling onto (out_h, out_w); targets only, not part
// of the differentiable path.
Tensor downsample_target(const Tensor& g, int out_h, int out_w);

// Per-level sum of the three terms against the target downsampled to each
// level's actual size, weighted and summed. With auxiliary=false only the
// full-resolution level contributes.
LossBreakdown total_loss(const DepthPyramid& pyramid, const Tensor& g,
                         const LossConfig& cfg, bool auxiliary);

constexpr double kMinDepthMeters = 1e-3;
constexpr double kMaxDepthMeters = 10.0;

// Clamp to the metric depth range; applied at metric/visualization time only.
Tensor clamp_depth(const Tensor& d);

struct Metrics {
  double rmse = 0;
  double log10 = 0;
  double delta1 = 0;
  double delta2 = 0;
  double delta3 = 0;
};

// RMSE, mean |log10 d - log10 g| and the delta accuracies at thresholds
// 1.25, 1.25^2, 1.25^3 over the g > 0 validity mask. d is clamped to the
// metric depth range first.
Metrics evaluate_metrics(const Tensor& d, const Tensor& g);

}  // namespace drnet
