#pragma once

#include <functional>
#include <iosfwd>

#include "drnet/tensor.hpp"

namespace drnet {

using TensorFn = std::function<Tensor(const Tensor&)>;

// Central-difference check of reverse-mode gradients for a scalar-valued f.
// Returns max over coordinates of |analytic - central| / max(1, |central|).
// With max_coords > 0 and a larger input, a deterministic sample of
// coordinates is probed instead of all of them (keeps large checks cheap).
double finite_diff_check(const TensorFn& f, const Tensor& x, double h = 1e-5,
                         std::int64_t max_coords = 0);

// Same check for a target that the loss closure references internally
// (model parameters, shared inputs). target must be a grad-requiring leaf;
// its entries are perturbed in place and restored.
double finite_diff_check_inplace(const std::function<Tensor()>& loss_fn,
                                 Tensor target, double h = 1e-5,
                                 std::int64_t max_coords = 0);

// The full oracle suite behind the `gradcheck` CLI subcommand: every core
// op plus the end-to-end model loss. Prints one line per check.
bool run_gradcheck_suite(std::ostream& out);

}  // namespace drnet
