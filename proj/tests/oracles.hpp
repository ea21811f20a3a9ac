// Independent scalar-loop reference implementations used as test oracles.
// These deliberately share no code with the library's operator paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "drnet/tensor.hpp"

namespace oracle {

using drnet::Shape;
using drnet::Tensor;
using drnet::real_t;

inline std::vector<real_t> conv2d_ref(const Tensor& x, const Tensor& w,
                                      const Tensor& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const int k = ws.h;
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  std::vector<real_t> out(static_cast<std::size_t>(xs.n) * ws.n * oh * ow, 0);
  for (int n = 0; n < xs.n; ++n)
    for (int oc = 0; oc < ws.n; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b.data()[oc] : 0.0;
          for (int ic = 0; ic < ws.c; ++ic)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int iy = oy * stride + kh - pad;
                const int ix = ox * stride + kw - pad;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += static_cast<double>(x.at(n, ic, iy, ix)) *
                       w.at(oc, ic, kh, kw);
              }
          out[((static_cast<std::size_t>(n) * ws.n + oc) * oh + oy) * ow + ox] =
              static_cast<real_t>(acc);
        }
  return out;
}

inline std::vector<real_t> maxpool_ref(const Tensor& x, int k, int stride,
                                       int pad) {
  const Shape xs = x.shape();
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  std::vector<real_t> out(static_cast<std::size_t>(xs.n) * xs.c * oh * ow);
  std::size_t o = 0;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          real_t best = 0;
          bool seen = false;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int iy = oy * stride + kh - pad;
              const int ix = ox * stride + kw - pad;
              if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
              const real_t v = x.at(n, c, iy, ix);
              if (!seen || v > best) {
                best = v;
                seen = true;
              }
            }
          out[o++] = best;
        }
  return out;
}

// The explicit index-formula loop for the channel-to-space permutation.
inline std::vector<real_t> pixel_shuffle_ref(const Tensor& x, int r) {
  const Shape xs = x.shape();
  const int oc = xs.c / (r * r);
  const int oh = xs.h * r, ow = xs.w * r;
  std::vector<real_t> out(static_cast<std::size_t>(xs.n) * oc * oh * ow);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int y = 0; y < xs.h; ++y)
        for (int xw = 0; xw < xs.w; ++xw)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
              out[((static_cast<std::size_t>(n) * oc + c) * oh + (y * r + i)) * ow +
                  (xw * r + j)] = x.at(n, c * r * r + i * r + j, y, xw);
            }
  return out;
}

inline std::vector<real_t> bilinear_ref(const Tensor& x, int factor) {
  const Shape xs = x.shape();
  const int oh = xs.h * factor, ow = xs.w * factor;
  std::vector<real_t> out(static_cast<std::size_t>(xs.n) * xs.c * oh * ow);
  std::size_t o = 0;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int ty = 0; ty < oh; ++ty)
        for (int tx = 0; tx < ow; ++tx) {
          double sy = (ty + 0.5) / factor - 0.5;
          double sx = (tx + 0.5) / factor - 0.5;
          sy = std::clamp(sy, 0.0, static_cast<double>(xs.h - 1));
          sx = std::clamp(sx, 0.0, static_cast<double>(xs.w - 1));
          const int y0 = static_cast<int>(std::floor(sy));
          const int x0 = static_cast<int>(std::floor(sx));
          const int y1 = std::min(y0 + 1, xs.h - 1);
          const int x1 = std::min(x0 + 1, xs.w - 1);
          const double fy = sy - y0, fx = sx - x0;
          out[o++] = static_cast<real_t>(
              (1 - fy) * ((1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1)) +
              fy * ((1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1)));
        }
  return out;
}

// Replicate-padded 3x3 Sobel responses divided by 8, per (n, h, w) plane.
inline void sobel_ref(const std::vector<double>& img, int h, int w,
                      std::vector<double>& gx, std::vector<double>& gy) {
  gx.assign(img.size(), 0);
  gy.assign(img.size(), 0);
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return img[static_cast<std::size_t>(y) * w + x];
  };
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double ax = 0, ay = 0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          ax += kx[i][j] * px(y + i - 1, x + j - 1);
          ay += kx[j][i] * px(y + i - 1, x + j - 1);
        }
      gx[static_cast<std::size_t>(y) * w + x] = ax / 8.0;
      gy[static_cast<std::size_t>(y) * w + x] = ay / 8.0;
    }
}

struct LossRef {
  double depth = 0, grad = 0, normal = 0;
};

// Scalar reimplementation of the three per-level loss terms for one
// single-channel map pair (batch folded into the plane list).
inline LossRef loss_ref(const Tensor& d, const Tensor& g, double alpha) {
  const Shape s = d.shape();
  const int planes = s.n * s.c;
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  LossRef r;
  std::vector<double> e(plane), gxd, gyd, gxg, gyg, gxe, gye, dd(plane), gg(plane);
  for (int p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) {
      dd[i] = d.data()[p * plane + i];
      gg[i] = g.data()[p * plane + i];
      e[i] = std::abs(dd[i] - gg[i]);
    }
    sobel_ref(e, s.h, s.w, gxe, gye);
    sobel_ref(dd, s.h, s.w, gxd, gyd);
    sobel_ref(gg, s.h, s.w, gxg, gyg);
    for (std::size_t i = 0; i < plane; ++i) {
      r.depth += std::log(e[i] + alpha);
      r.grad += std::log(std::abs(gxe[i]) + alpha) + std::log(std::abs(gye[i]) + alpha);
      const double nd[3] = {-gxd[i], -gyd[i], 1.0};
      const double ng[3] = {-gxg[i], -gyg[i], 1.0};
      const double dot = nd[0] * ng[0] + nd[1] * ng[1] + nd[2] * ng[2];
      const double mag = std::sqrt(nd[0] * nd[0] + nd[1] * nd[1] + 1.0) *
                         std::sqrt(ng[0] * ng[0] + ng[1] * ng[1] + 1.0);
      r.normal += 1.0 - dot / mag;
    }
  }
  const double inv = 1.0 / (static_cast<double>(planes) * plane);
  r.depth *= inv;
  r.grad *= inv;
  r.normal *= inv;
  return r;
}

inline std::vector<real_t> downsample_ref(const Tensor& g, int oh, int ow) {
  const Shape s = g.shape();
  const int fy = s.h / oh, fx = s.w / ow;
  std::vector<real_t> out(static_cast<std::size_t>(s.n) * s.c * oh * ow);
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          double acc = 0;
          for (int i = 0; i < fy; ++i)
            for (int j = 0; j < fx; ++j) acc += g.at(n, c, y * fy + i, x * fx + j);
          out[o++] = static_cast<real_t>(acc / (fy * fx));
        }
  return out;
}

}  // namespace oracle
