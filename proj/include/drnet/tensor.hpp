#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace drnet {

#ifdef DRNET_REAL_FLOAT
using real_t = float;
#else
using real_t = double;
#endif

constexpr int precision_bits() { return sizeof(real_t) == 4 ? 32 : 64; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape/axis disagreements between tensors.
struct DimensionError : Error {
  using Error::Error;
};
// Bad argument values (stride, factor, kernel size, ...).
struct ValueError : Error {
  using Error::Error;
};
// Violations of an operation's calling contract (backward on a non-scalar,
// missing gradient, mutating a non-leaf).
struct ContractError : Error {
  using Error::Error;
};
// Malformed files (DRT1, PPM/PGM, manifests).
struct ParseError : Error {
  using Error::Error;
};
// Config documents that fail validation; message is path-qualified.
struct ConfigError : Error {
  using Error::Error;
};

// Dense 4-D shape (batch, channel, height, width).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Pass-local gradient buffers for one backward() traversal.
struct BackwardCtx {
  std::vector<real_t>& of(Node* node);
  std::unordered_map<Node*, std::vector<real_t>> buf;
};

struct Node {
  Shape shape;
  std::vector<real_t> data;
  bool requires_grad = false;
  std::vector<real_t> grad;  // persistent, accumulated across backward calls

  // Graph edges; empty for leaves and for tensors built with grad disabled.
  std::vector<NodePtr> parents;
  std::function<void(const std::vector<real_t>&, BackwardCtx&)> backward_fn;

  bool counted = false;  // participates in the live-activation counter

  Node(const Shape& s, std::vector<real_t> values);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  void uncount();  // remove from the activation counter (parameters, state)
};

bool grad_enabled();

}  // namespace detail

// Disables graph construction for the enclosing scope (inference, benchmarks,
// finite-difference probes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Live/peak element counts for tensors that are activations (parameters and
// persistent state are excluded once marked). Used by the benchmark harness.
namespace memcount {
std::int64_t live();
std::int64_t peak();
void reset_peak();  // peak := live
}  // namespace memcount

// Value-semantic handle over immutable-after-construction tensor storage.
// Copies share storage. Operations never mutate an existing tensor; the
// optimizer and batchnorm running state use data_mut() between passes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(const Shape& s, std::vector<real_t> values,
                          bool requires_grad = false);
  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, real_t value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t numel() const;
  bool requires_grad() const;

  const std::vector<real_t>& data() const;
  std::vector<real_t>& data_mut();

  // Gradient accumulated by backward(); empty before the first pass.
  const std::vector<real_t>& grad() const;
  void zero_grad();

  // Leaf-only toggles.
  void set_requires_grad(bool v);
  // Excludes this tensor from the activation counter (parameters, buffers).
  void mark_state();

  real_t at(int n, int c, int y, int x) const;
  real_t item() const;

  // Fresh leaf with copied values.
  Tensor clone(bool requires_grad = false) const;

  detail::Node* node() const { return impl_.get(); }
  const detail::NodePtr& handle() const { return impl_; }

 private:
  explicit Tensor(detail::NodePtr impl) : impl_(std::move(impl)) {}
  detail::NodePtr impl_;

  friend Tensor make_op_result(const Shape&, std::vector<real_t>,
                               std::vector<detail::NodePtr>,
                               std::function<void(const std::vector<real_t>&,
                                                  detail::BackwardCtx&)>);
};

// ---- operations -----------------------------------------------------------

// 2-D cross-correlation. weight is (co, ci, k, k) with odd k; bias, when
// defined, holds co values. Differentiable in x, weight and bias.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

// Per-channel batch normalization. In train mode the batch statistics are
// used and running_mean / running_var are updated in place via EMA with the
// given momentum (unbiased variance goes into the running estimate).
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor running_mean, Tensor running_var, bool train,
                   real_t eps, real_t momentum);

Tensor relu(const Tensor& x);

Tensor maxpool2d(const Tensor& x, int k, int stride, int pad);

// Channel-to-space permutation: (n, c, h, w) -> (n, c/r^2, h*r, w*r) with
// out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w].
Tensor pixel_shuffle(const Tensor& x, int r);

// Upsampling by factor 1, 2 or 4 with half-pixel centers and edge clamping:
// source coordinate s = (t + 0.5)/factor - 0.5 for target index t.
Tensor bilinear_upsample(const Tensor& x, int factor);

Tensor concat_channels(const std::vector<Tensor>& xs);

// Border padding by edge replication (gradient accumulates into the clamped
// source positions).
Tensor replicate_pad(const Tensor& x, int p);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, real_t v);
Tensor mul_scalar(const Tensor& a, real_t v);
Tensor abs(const Tensor& a);
Tensor log(const Tensor& a);   // requires strictly positive input
Tensor sqrt(const Tensor& a);  // requires non-negative input

// Full reductions to a (1,1,1,1) scalar.
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Reverse-mode pass from a scalar loss. Every reachable tensor with
// requires_grad receives (accumulates) its gradient; repeated calls without
// zero_grad accumulate.
void backward(const Tensor& loss);

}  // namespace drnet
