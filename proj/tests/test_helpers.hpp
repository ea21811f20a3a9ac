#pragma once

#include <vector>

#include "drnet/rng.hpp"
#include "drnet/tensor.hpp"

namespace testutil {

using drnet::Shape;
using drnet::Tensor;
using drnet::real_t;

// Random values in [-1, 1] kept at least `margin` away from 0 so that
// checks never probe the relu/abs kink.
inline Tensor nudged_random(const Shape& s, std::uint64_t seed,
                            double margin = 1e-2) {
  drnet::SplitMix64 rng(seed);
  std::vector<real_t> v(s.numel());
  for (auto& x : v) {
    double u = rng.uniform(-1.0, 1.0);
    if (u >= 0) {
      u = margin + u * (1.0 - margin);
    } else {
      u = -margin + u * (1.0 - margin);
    }
    x = static_cast<real_t>(u);
  }
  return Tensor::from_data(s, std::move(v));
}

inline Tensor positive_random(const Shape& s, std::uint64_t seed, double lo = 0.1,
                              double hi = 2.0) {
  drnet::SplitMix64 rng(seed);
  std::vector<real_t> v(s.numel());
  for (auto& x : v) x = static_cast<real_t>(rng.uniform(lo, hi));
  return Tensor::from_data(s, std::move(v));
}

inline double max_abs_diff(const std::vector<real_t>& a,
                           const std::vector<real_t>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return a.size() == b.size() ? m : 1e30;
}

}  // namespace testutil
