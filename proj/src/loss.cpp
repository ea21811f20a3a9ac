#include "drnet/loss.hpp"

#include <cmath>

namespace drnet {

void LossConfig::validate() const {
  if (!(alpha > 0)) throw ConfigError("loss.alpha: must be > 0");
  for (real_t w : level_weights) {
    if (w < 0) throw ConfigError("loss.level_weights: must be >= 0");
  }
}

namespace {

const Tensor& sobel_kernel_x() {
  static const Tensor k = [] {
    Tensor t = Tensor::from_data(
        {1, 1, 3, 3},
        {-0.125, 0, 0.125, -0.25, 0, 0.25, -0.125, 0, 0.125});
    t.mark_state();
    return t;
  }();
  return k;
}

const Tensor& sobel_kernel_y() {
  static const Tensor k = [] {
    Tensor t = Tensor::from_data(
        {1, 1, 3, 3},
        {-0.125, -0.25, -0.125, 0, 0, 0, 0.125, 0.25, 0.125});
    t.mark_state();
    return t;
  }();
  return k;
}

void require_single_channel_pair(const Tensor& d, const Tensor& g,
                                 const char* op) {
  if (!(d.shape() == g.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(d.shape()) + " vs " + to_string(g.shape()));
  }
  if (d.shape().c != 1) {
    throw DimensionError(std::string(op) + ": expected single-channel maps, got " +
                         to_string(d.shape()));
  }
}

}  // namespace

// Maps smaller than the stencil are handled by the replicate padding: the
// clamped neighborhood degrades to the correct limit (zero response on a
// 1x1 map), which keeps the coarsest pyramid levels of small inputs usable.
std::pair<Tensor, Tensor> sobel_gradients(const Tensor& x) {
  if (x.shape().c != 1) {
    throw DimensionError("sobel_gradients: expected a single-channel map, got " +
                         to_string(x.shape()));
  }
  Tensor padded = replicate_pad(x, 1);
  Tensor gx = conv2d(padded, sobel_kernel_x(), {}, 1, 0);
  Tensor gy = conv2d(padded, sobel_kernel_y(), {}, 1, 0);
  return {gx, gy};
}

Tensor depth_loss(const Tensor& d, const Tensor& g, real_t alpha) {
  require_single_channel_pair(d, g, "depth_loss");
  return mean_all(log(add_scalar(abs(sub(d, g)), alpha)));
}

Tensor grad_loss(const Tensor& d, const Tensor& g, real_t alpha) {
  require_single_channel_pair(d, g, "grad_loss");
  Tensor e = abs(sub(d, g));
  auto [gx, gy] = sobel_gradients(e);
  Tensor lx = mean_all(log(add_scalar(abs(gx), alpha)));
  Tensor ly = mean_all(log(add_scalar(abs(gy), alpha)));
  return add(lx, ly);
}

Tensor normal_loss(const Tensor& d, const Tensor& g) {
  require_single_channel_pair(d, g, "normal_loss");
  auto [dx, dy] = sobel_gradients(d);
  auto [gx, gy] = sobel_gradients(g);
  // <n_d, n_g> = dx*gx + dy*gy + 1; |n| = sqrt(grad^2 + 1) >= 1
  Tensor dot = add_scalar(add(mul(dx, gx), mul(dy, gy)), 1);
  Tensor nd = sqrt(add_scalar(add(mul(dx, dx), mul(dy, dy)), 1));
  Tensor ng = sqrt(add_scalar(add(mul(gx, gx), mul(gy, gy)), 1));
  Tensor cos = div(dot, mul(nd, ng));
  return mean_all(add_scalar(mul_scalar(cos, -1), 1));
}

Tensor downsample_target(const Tensor& g, int out_h, int out_w) {
  const Shape s = g.shape();
  if (out_h < 1 || out_w < 1 || s.h % out_h != 0 || s.w % out_w != 0) {
    throw DimensionError("downsample_target: " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " does not divide " +
                         std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  const int fy = s.h / out_h, fx = s.w / out_w;
  if (fy == 1 && fx == 1) return g;
  std::vector<real_t> out(static_cast<std::size_t>(s.n) * s.c * out_h * out_w);
  const real_t inv = real_t(1) / static_cast<real_t>(fy * fx);
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          real_t acc = 0;
          for (int i = 0; i < fy; ++i) {
            const real_t* row = g.data().data() +
                                ((static_cast<std::int64_t>(n) * s.c + c) * s.h +
                                 y * fy + i) *
                                    s.w +
                                x * fx;
            for (int j = 0; j < fx; ++j) acc += row[j];
          }
          out[o++] = acc * inv;
        }
  return Tensor::from_data({s.n, s.c, out_h, out_w}, std::move(out));
}

LossBreakdown total_loss(const DepthPyramid& pyramid, const Tensor& g,
                         const LossConfig& cfg, bool auxiliary) {
  cfg.validate();
  LossBreakdown out;
  Tensor total;
  for (int level = 5; level >= 0; --level) {
    if (!pyramid.upII[level].defined()) continue;
    if (auxiliary == false && level != 0) continue;
    const Tensor& d = pyramid.upII[level];
    Tensor target = downsample_target(g, d.shape().h, d.shape().w);
    Tensor dt = depth_loss(d, target, cfg.alpha);
    Tensor gt = grad_loss(d, target, cfg.alpha);
    Tensor nt = normal_loss(d, target);
    auto& term = out.level[level];
    term.depth = dt.item();
    term.grad = gt.item();
    term.normal = nt.item();
    term.present = true;
    Tensor li = mul_scalar(add(add(dt, gt), nt), cfg.level_weights[level]);
    total = total.defined() ? add(total, li) : li;
  }
  if (!total.defined()) {
    throw ContractError("total_loss: pyramid holds no depth maps");
  }
  out.total = total;
  out.total_value = total.item();
  return out;
}

Tensor clamp_depth(const Tensor& d) {
  std::vector<real_t> v = d.data();
  for (auto& x : v) {
    x = std::min(std::max(x, static_cast<real_t>(kMinDepthMeters)),
                 static_cast<real_t>(kMaxDepthMeters));
  }
  return Tensor::from_data(d.shape(), std::move(v));
}

Metrics evaluate_metrics(const Tensor& d, const Tensor& g) {
  if (!(d.shape() == g.shape())) {
    throw DimensionError("evaluate_metrics: shape mismatch " +
                         to_string(d.shape()) + " vs " + to_string(g.shape()));
  }
  const auto& gd = g.data();
  Tensor dc = clamp_depth(d);
  const auto& dd = dc.data();
  std::int64_t valid = 0;
  double se = 0, l10 = 0;
  std::int64_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < gd.size(); ++i) {
    if (!(gd[i] > 0)) continue;
    ++valid;
    const double diff = static_cast<double>(dd[i]) - gd[i];
    se += diff * diff;
    l10 += std::abs(std::log10(static_cast<double>(dd[i])) - std::log10(gd[i]));
    const double ratio =
        std::max(static_cast<double>(dd[i]) / gd[i], gd[i] / static_cast<double>(dd[i]));
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
  }
  if (valid == 0) {
    throw ValueError("evaluate_metrics: empty validity mask (no g > 0 pixels)");
  }
  Metrics m;
  m.rmse = std::sqrt(se / static_cast<double>(valid));
  m.log10 = l10 / static_cast<double>(valid);
  m.delta1 = static_cast<double>(d1) / static_cast<double>(valid);
  m.delta2 = static_cast<double>(d2) / static_cast<double>(valid);
  m.delta3 = static_cast<double>(d3) / static_cast<double>(valid);
  return m;
}

}  // namespace drnet
