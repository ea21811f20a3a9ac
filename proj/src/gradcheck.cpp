#include "drnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "drnet/rng.hpp"

namespace drnet {

namespace {

std::vector<std::int64_t> probe_coords(std::int64_t numel,
                                       std::int64_t max_coords) {
  std::vector<std::int64_t> coords;
  if (max_coords <= 0 || numel <= max_coords) {
    coords.resize(numel);
    for (std::int64_t i = 0; i < numel; ++i) coords[i] = i;
    return coords;
  }
  SplitMix64 rng(0x5D1F00D5ULL ^ static_cast<std::uint64_t>(numel));
  std::unordered_set<std::int64_t> seen;
  while (static_cast<std::int64_t>(coords.size()) < max_coords) {
    const auto i = static_cast<std::int64_t>(rng.below(numel));
    if (seen.insert(i).second) coords.push_back(i);
  }
  std::sort(coords.begin(), coords.end());
  return coords;
}

}  // namespace

double finite_diff_check_inplace(const std::function<Tensor()>& loss_fn,
                                 Tensor target, double h, std::int64_t max_coords) {
  if (!target.requires_grad()) {
    throw ContractError("finite_diff_check: target does not require gradients");
  }
  target.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<real_t> analytic(target.grad());
  if (analytic.empty()) analytic.assign(target.numel(), 0);

  const auto coords = probe_coords(target.numel(), max_coords);
  double max_rel = 0;
  NoGradGuard ng;
  auto& values = target.data_mut();
  for (const std::int64_t i : coords) {
    const real_t saved = values[i];
    values[i] = saved + static_cast<real_t>(h);
    const double fp = loss_fn().item();
    values[i] = saved - static_cast<real_t>(h);
    const double fm = loss_fn().item();
    values[i] = saved;
    const double central = (fp - fm) / (2 * h);
    const double rel = std::abs(static_cast<double>(analytic[i]) - central) /
                       std::max(1.0, std::abs(central));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

double finite_diff_check(const TensorFn& f, const Tensor& x, double h,
                         std::int64_t max_coords) {
  Tensor probe = x.clone(true);
  return finite_diff_check_inplace([&] { return f(probe); }, probe, h,
                                   max_coords);
}

}  // namespace drnet
