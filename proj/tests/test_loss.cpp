#include <doctest.h>

#include <cmath>

#include "drnet/gradcheck.hpp"
#include "drnet/loss.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace drnet;
using testutil::max_abs_diff;
using testutil::positive_random;

TEST_SUITE_BEGIN("loss");

namespace {

Tensor ramp_x(int h, int w) {
  std::vector<real_t> v(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[static_cast<std::size_t>(y) * w + x] = static_cast<real_t>(x);
  return Tensor::from_data({1, 1, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("sobel of a constant map vanishes") {
  auto [gx, gy] = sobel_gradients(Tensor::full({1, 1, 5, 5}, 3.7));
  for (real_t v : gx.data()) CHECK(v == doctest::Approx(0).epsilon(1e-12));
  for (real_t v : gy.data()) CHECK(v == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("sobel of a unit ramp is 1 in x and 0 in y") {
  auto [gx, gy] = sobel_gradients(ramp_x(5, 6));
  for (int y = 0; y < 5; ++y)
    for (int x = 1; x < 5; ++x) {
      CHECK(gx.at(0, 0, y, x) == doctest::Approx(1).epsilon(1e-12));
    }
  for (real_t v : gy.data()) CHECK(v == doctest::Approx(0).epsilon(1e-12));
  // replicate-padded borders see half the span
  CHECK(gx.at(0, 0, 2, 0) == doctest::Approx(0.5));
  CHECK(gx.at(0, 0, 2, 5) == doctest::Approx(0.5));
}

TEST_CASE("sobel transpose symmetry") {
  Tensor x = positive_random({1, 1, 4, 4}, 1);
  std::vector<real_t> tv(16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) tv[static_cast<std::size_t>(i) * 4 + j] = x.at(0, 0, j, i);
  Tensor xt = Tensor::from_data({1, 1, 4, 4}, std::move(tv));
  auto [gx, gy] = sobel_gradients(x);
  auto [gxt, gyt] = sobel_gradients(xt);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(gxt.at(0, 0, i, j) == doctest::Approx(gy.at(0, 0, j, i)).epsilon(1e-12));
      CHECK(gyt.at(0, 0, i, j) == doctest::Approx(gx.at(0, 0, j, i)).epsilon(1e-12));
    }
}

TEST_CASE("sobel matches the scalar oracle on maps below stencil size") {
  Tensor x = positive_random({1, 1, 2, 2}, 2);
  auto [gx, gy] = sobel_gradients(x);
  std::vector<double> img(4), ox, oy;
  for (int i = 0; i < 4; ++i) img[i] = x.data()[i];
  oracle::sobel_ref(img, 2, 2, ox, oy);
  for (int i = 0; i < 4; ++i) {
    CHECK(gx.data()[i] == doctest::Approx(ox[i]).epsilon(1e-12));
    CHECK(gy.data()[i] == doctest::Approx(oy[i]).epsilon(1e-12));
  }
  // 1x1 limit: zero response
  auto [g1x, g1y] = sobel_gradients(Tensor::full({1, 1, 1, 1}, 2));
  CHECK(g1x.item() == 0);
  CHECK(g1y.item() == 0);
}

TEST_CASE("depth loss hits its analytic values") {
  Tensor g = positive_random({1, 1, 4, 4}, 3, 1.0, 5.0);
  CHECK(depth_loss(g, g, 0.5).item() ==
        doctest::Approx(std::log(0.5)).epsilon(1e-12));

  Tensor d = add_scalar(g, 0.5);  // |d-g| = 0.5 everywhere, F -> ln(1) = 0
  CHECK(depth_loss(d, g, 0.5).item() == doctest::Approx(0).epsilon(1e-12));

  // monotonicity: growing one residual never lowers the loss
  const double base = depth_loss(d, g, 0.5).item();
  auto vd = d.data();
  vd[5] += 1;
  Tensor worse = Tensor::from_data(d.shape(), std::move(vd));
  CHECK(depth_loss(worse, g, 0.5).item() >= base);
}

TEST_CASE("grad loss hits its analytic values and the oracle") {
  Tensor g = positive_random({1, 1, 5, 5}, 4, 1.0, 5.0);
  CHECK(grad_loss(g, g, 0.5).item() ==
        doctest::Approx(2 * std::log(0.5)).epsilon(1e-12));
  // constant residual: gradients of a constant vanish
  CHECK(grad_loss(add_scalar(g, 0.7), g, 0.5).item() ==
        doctest::Approx(2 * std::log(0.5)).epsilon(1e-12));

  Tensor d = positive_random({1, 1, 5, 5}, 5, 1.0, 5.0);
  const auto ref = oracle::loss_ref(d, g, 0.5);
  CHECK(std::abs(grad_loss(d, g, 0.5).item() - ref.grad) < 1e-10);
  CHECK(std::abs(depth_loss(d, g, 0.5).item() - ref.depth) < 1e-10);
}

TEST_CASE("normal loss: identity, range, and the ramp-vs-constant value") {
  Tensor g = positive_random({1, 1, 5, 5}, 6, 1.0, 5.0);
  CHECK(normal_loss(g, g).item() == doctest::Approx(0).epsilon(1e-12));

  Tensor d = positive_random({1, 1, 5, 5}, 7, 1.0, 5.0);
  const double v = normal_loss(d, g).item();
  CHECK(v >= 0.0);
  CHECK(v <= 2.0);
  CHECK(std::abs(v - oracle::loss_ref(d, g, 0.5).normal) < 1e-10);

  // ramp against constant: interior pixels have slope 1 vs 0, border columns
  // see half the span through the replicate padding
  Tensor ramp = ramp_x(5, 5);
  Tensor flat = Tensor::full({1, 1, 5, 5}, 2);
  const double interior = 1.0 - 1.0 / std::sqrt(2.0);
  const double border = 1.0 - 1.0 / std::sqrt(1.25);
  const double expect = (15 * interior + 10 * border) / 25.0;
  CHECK(normal_loss(ramp, flat).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("downsample_target averages non-overlapping windows") {
  Tensor g = Tensor::from_data({1, 1, 2, 2}, {0, 2, 4, 6});
  Tensor y = downsample_target(g, 1, 1);
  CHECK(y.item() == doctest::Approx(3).epsilon(1e-12));

  Tensor c = Tensor::full({1, 1, 8, 8}, 1.25);
  Tensor cd = downsample_target(c, 2, 2);
  for (real_t v : cd.data()) {
    CHECK(v == doctest::Approx(1.25).epsilon(1e-12));
  }

  Tensor r = positive_random({2, 1, 8, 8}, 8);
  Tensor d = downsample_target(r, 4, 2);
  CHECK(max_abs_diff(d.data(), oracle::downsample_ref(r, 4, 2)) < 1e-12);
  // global mean preserved exactly
  CHECK(mean_all(d).item() == doctest::Approx(mean_all(r).item()).epsilon(1e-12));

  CHECK_THROWS_AS(downsample_target(r, 3, 3), DimensionError);
}

TEST_CASE("total loss at the per-term minima") {
  Tensor g = positive_random({1, 1, 64, 64}, 9, 1.0, 5.0);
  DepthPyramid p;
  const int sizes[6] = {64, 16, 16, 8, 4, 2};
  for (int level = 0; level <= 5; ++level) {
    p.upII[level] = downsample_target(g, sizes[level], sizes[level]);
  }
  LossConfig cfg;
  const LossBreakdown b = total_loss(p, g, cfg, true);
  // depth ln a + grad 2 ln a + normal 0, six levels, unit weights
  CHECK(b.total_value ==
        doctest::Approx(6 * 3 * std::log(0.5)).epsilon(1e-9));
  for (int level = 0; level <= 5; ++level) {
    CHECK(b.level[level].present);
    CHECK(b.level[level].depth == doctest::Approx(std::log(0.5)).epsilon(1e-9));
    CHECK(b.level[level].grad == doctest::Approx(2 * std::log(0.5)).epsilon(1e-9));
    CHECK(b.level[level].normal == doctest::Approx(0).epsilon(1e-9));
  }
}

TEST_CASE("auxiliary off keeps only the full-resolution term") {
  Tensor g = positive_random({1, 1, 64, 64}, 10, 1.0, 5.0);
  DRNetModel model({}, 11);
  Tensor img = positive_random({1, 3, 64, 64}, 12, 0.0, 1.0);
  DepthPyramid p = model.forward(img, false);
  LossConfig cfg;
  const LossBreakdown all = total_loss(p, g, cfg, true);
  const LossBreakdown only0 = total_loss(p, g, cfg, false);
  CHECK(only0.level[0].present);
  for (int level = 1; level <= 5; ++level) CHECK_FALSE(only0.level[level].present);
  const double l0 = only0.level[0].depth + only0.level[0].grad + only0.level[0].normal;
  CHECK(only0.total_value == doctest::Approx(l0).epsilon(1e-12));
  CHECK(all.total_value != doctest::Approx(only0.total_value));
}

TEST_CASE("level weights scale their terms") {
  Tensor g = positive_random({1, 1, 64, 64}, 13, 1.0, 5.0);
  DRNetModel model({}, 14);
  Tensor img = positive_random({1, 3, 64, 64}, 15, 0.0, 1.0);
  DepthPyramid p = model.forward(img, false);
  LossConfig w2;
  w2.level_weights = {2, 2, 2, 2, 2, 2};
  const double base = total_loss(p, g, {}, true).total_value;
  CHECK(total_loss(p, g, w2, true).total_value ==
        doctest::Approx(2 * base).epsilon(1e-9));
}

TEST_CASE("total loss is batch-permutation invariant") {
  Tensor g0 = positive_random({1, 1, 32, 32}, 16, 1.0, 5.0);
  Tensor g1 = positive_random({1, 1, 32, 32}, 17, 1.0, 5.0);
  Tensor d0 = positive_random({1, 1, 32, 32}, 18, 1.0, 5.0);
  Tensor d1 = positive_random({1, 1, 32, 32}, 19, 1.0, 5.0);
  auto stack = [](const Tensor& a, const Tensor& b) {
    std::vector<real_t> v = a.data();
    v.insert(v.end(), b.data().begin(), b.data().end());
    return Tensor::from_data({2, 1, 32, 32}, std::move(v));
  };
  DepthPyramid pa, pb;
  pa.upII[0] = stack(d0, d1);
  pb.upII[0] = stack(d1, d0);
  const double la = total_loss(pa, stack(g0, g1), {}, true).total_value;
  const double lb = total_loss(pb, stack(g1, g0), {}, true).total_value;
  CHECK(la == doctest::Approx(lb).epsilon(1e-12));
}

TEST_CASE("gradient of the total loss w.r.t. the finest map") {
  Tensor g = positive_random({1, 1, 32, 32}, 20, 1.0, 5.0);
  Tensor d = positive_random({1, 1, 32, 32}, 21, 2.0, 6.0);
  DepthPyramid p;
  p.upII[0] = d.clone(true);
  auto loss_fn = [&] { return total_loss(p, g, {}, true).total; };
  CHECK(finite_diff_check_inplace(loss_fn, p.upII[0], 1e-5, 64) < 1e-4);
}

TEST_CASE("metrics on identical maps") {
  Tensor g = positive_random({1, 1, 6, 6}, 22, 1.0, 5.0);
  const Metrics m = evaluate_metrics(g, g);
  CHECK(m.rmse == doctest::Approx(0));
  CHECK(m.log10 == doctest::Approx(0));
  CHECK(m.delta1 == 1.0);
  CHECK(m.delta2 == 1.0);
  CHECK(m.delta3 == 1.0);
}

TEST_CASE("metrics threshold arithmetic at d = 1.3 g") {
  Tensor g = positive_random({1, 1, 6, 6}, 23, 1.0, 5.0);
  const Metrics m = evaluate_metrics(mul_scalar(g, 1.3), g);
  CHECK(m.delta1 == 0.0);
  CHECK(m.delta2 == 1.0);
  CHECK(m.delta3 == 1.0);
}

TEST_CASE("rmse hand example") {
  Tensor d = Tensor::from_data({1, 1, 1, 2}, {1, 2});
  Tensor g = Tensor::from_data({1, 1, 1, 2}, {1, 4});
  const Metrics m = evaluate_metrics(d, g);
  CHECK(m.rmse == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("metric deltas are monotone and the mask guards hold") {
  Tensor g = positive_random({1, 1, 8, 8}, 24, 0.5, 9.0);
  Tensor d = positive_random({1, 1, 8, 8}, 25, 0.5, 9.0);
  const Metrics m = evaluate_metrics(d, g);
  CHECK(m.delta1 <= m.delta2);
  CHECK(m.delta2 <= m.delta3);

  CHECK_THROWS_AS(evaluate_metrics(d, Tensor::zeros({1, 1, 8, 8})), ValueError);

  // clamping: a wild prediction is clamped to 10 m before the metric
  Tensor wild = Tensor::full({1, 1, 1, 1}, 1e6);
  Tensor gt = Tensor::full({1, 1, 1, 1}, 5);
  CHECK(evaluate_metrics(wild, gt).rmse == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("per-level terms respect their analytic bounds") {
  Tensor g = positive_random({1, 1, 64, 64}, 30, 0.5, 9.5);
  DRNetModel model({}, 31);
  Tensor img = positive_random({1, 3, 64, 64}, 32, 0.0, 1.0);
  DepthPyramid p = model.forward(img, false);
  LossConfig cfg;
  const LossBreakdown b = total_loss(p, g, cfg, true);
  for (int level = 0; level <= 5; ++level) {
    REQUIRE(b.level[level].present);
    CHECK(b.level[level].depth >= std::log(cfg.alpha) - 1e-12);
    CHECK(b.level[level].grad >= 2 * std::log(cfg.alpha) - 1e-12);
    CHECK(b.level[level].normal >= 0.0);
    CHECK(b.level[level].normal <= 2.0);
  }
  double weighted = 0;
  for (int level = 0; level <= 5; ++level) {
    weighted += cfg.level_weights[level] *
                (b.level[level].depth + b.level[level].grad + b.level[level].normal);
  }
  CHECK(b.total_value == doctest::Approx(weighted).epsilon(1e-9));
}

TEST_CASE("tensor-path losses equal the scalar oracle within 1e-10") {
  for (std::uint64_t seed : {26, 27, 28}) {
    Tensor d = positive_random({1, 1, 8, 8}, seed, 0.5, 6.0);
    Tensor g = positive_random({1, 1, 8, 8}, seed + 100, 0.5, 6.0);
    const auto ref = oracle::loss_ref(d, g, 0.5);
    CHECK(std::abs(depth_loss(d, g, 0.5).item() - ref.depth) < 1e-10);
    CHECK(std::abs(grad_loss(d, g, 0.5).item() - ref.grad) < 1e-10);
    CHECK(std::abs(normal_loss(d, g).item() - ref.normal) < 1e-10);
  }
}

TEST_SUITE_END();
