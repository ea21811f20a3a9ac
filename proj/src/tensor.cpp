#include "drnet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace drnet {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

namespace {

std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};

void count_alloc(std::int64_t n) {
  const std::int64_t live = g_live.fetch_add(n) + n;
  std::int64_t peak = g_peak.load();
  while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
  }
}

void count_free(std::int64_t n) { g_live.fetch_sub(n); }

thread_local int g_nograd_depth = 0;

}  // namespace

namespace memcount {
std::int64_t live() { return g_live.load(); }
std::int64_t peak() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_live.load()); }
}  // namespace memcount

namespace detail {

bool grad_enabled() { return g_nograd_depth == 0; }

std::vector<real_t>& BackwardCtx::of(Node* node) {
  auto& v = buf[node];
  if (v.empty()) v.assign(static_cast<std::size_t>(node->shape.numel()), 0);
  return v;
}

Node::Node(const Shape& s, std::vector<real_t> values)
    : shape(s), data(std::move(values)) {
  if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
    throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape));
  }
  counted = true;
  count_alloc(shape.numel());
}

Node::~Node() {
  if (counted) count_free(shape.numel());
}

void Node::uncount() {
  if (counted) {
    count_free(shape.numel());
    counted = false;
  }
}

}  // namespace detail

NoGradGuard::NoGradGuard() { ++g_nograd_depth; }
NoGradGuard::~NoGradGuard() { --g_nograd_depth; }

using detail::BackwardCtx;
using detail::Node;
using detail::NodePtr;

// ---- Tensor handle ---------------------------------------------------------

Tensor Tensor::from_data(const Shape& s, std::vector<real_t> values,
                         bool requires_grad) {
  Tensor t(std::make_shared<Node>(s, std::move(values)));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  return from_data(s, std::vector<real_t>(s.numel(), 0), requires_grad);
}

Tensor Tensor::full(const Shape& s, real_t value, bool requires_grad) {
  return from_data(s, std::vector<real_t>(s.numel(), value), requires_grad);
}

static const Node& deref(const NodePtr& p, const char* who) {
  if (!p) throw ContractError(std::string(who) + ": undefined tensor");
  return *p;
}

const Shape& Tensor::shape() const { return deref(impl_, "shape").shape; }
std::int64_t Tensor::numel() const { return shape().numel(); }
bool Tensor::requires_grad() const {
  return deref(impl_, "requires_grad").requires_grad;
}

const std::vector<real_t>& Tensor::data() const {
  return deref(impl_, "data").data;
}

std::vector<real_t>& Tensor::data_mut() {
  deref(impl_, "data_mut");
  if (impl_->backward_fn) {
    throw ContractError("data_mut: only leaf tensors may be mutated");
  }
  return impl_->data;
}

const std::vector<real_t>& Tensor::grad() const {
  return deref(impl_, "grad").grad;
}

void Tensor::zero_grad() {
  deref(impl_, "zero_grad");
  std::fill(impl_->grad.begin(), impl_->grad.end(), real_t(0));
}

void Tensor::set_requires_grad(bool v) {
  deref(impl_, "set_requires_grad");
  if (impl_->backward_fn) {
    throw ContractError("set_requires_grad: tensor is not a leaf");
  }
  impl_->requires_grad = v;
}

void Tensor::mark_state() {
  deref(impl_, "mark_state");
  impl_->uncount();
}

real_t Tensor::at(int n, int c, int y, int x) const {
  const Shape& s = shape();
  return impl_->data[((static_cast<std::int64_t>(n) * s.c + c) * s.h + y) * s.w + x];
}

real_t Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor " + to_string(shape()) + " is not scalar");
  }
  return impl_->data[0];
}

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(shape(), data(), requires_grad);
}

// Builds an op result; wires the graph only when tracking is on and some
// input requires grad.
Tensor make_op_result(
    const Shape& s, std::vector<real_t> values, std::vector<NodePtr> parents,
    std::function<void(const std::vector<real_t>&, BackwardCtx&)> fn) {
  Tensor out = Tensor::from_data(s, std::move(values), false);
  bool track = detail::grad_enabled();
  if (track) {
    track = false;
    for (const auto& p : parents) {
      if (p && p->requires_grad) track = true;
    }
  }
  if (track) {
    Node* n = out.node();
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return out;
}

// ---- helpers ---------------------------------------------------------------

namespace {

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

// Range of output positions whose source index o*stride + k - pad lies in
// [0, limit).
struct LoopRange {
  int lo;
  int hi;  // exclusive
};

LoopRange valid_range(int out_size, int k_off, int stride, int pad, int limit) {
  // o*stride + k_off - pad in [0, limit)
  int lo = 0;
  const int base = k_off - pad;
  if (base < 0) lo = (-base + stride - 1) / stride;
  int hi = out_size;
  // largest o with o*stride + base <= limit - 1
  const int top = limit - 1 - base;
  if (top < 0) {
    hi = 0;
  } else {
    hi = std::min(out_size, top / stride + 1);
  }
  return {std::min(lo, hi), hi};
}

struct BilinearAxis {
  std::vector<int> i0, i1;
  std::vector<real_t> frac;  // weight of i1
};

BilinearAxis bilinear_axis(int in_size, int factor) {
  const int out_size = in_size * factor;
  BilinearAxis ax;
  ax.i0.resize(out_size);
  ax.i1.resize(out_size);
  ax.frac.resize(out_size);
  for (int t = 0; t < out_size; ++t) {
    double s = (t + 0.5) / factor - 0.5;
    s = std::min(std::max(s, 0.0), static_cast<double>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(s));
    ax.i0[t] = i0;
    ax.i1[t] = std::min(i0 + 1, in_size - 1);
    ax.frac[t] = static_cast<real_t>(s - i0);
  }
  return ax;
}

Tensor map_unary(const Tensor& a, const char* op,
                 const std::function<real_t(real_t)>& f,
                 const std::function<real_t(real_t)>& df) {
  require_defined(a, op);
  const auto& in = a.data();
  std::vector<real_t> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  NodePtr ap = a.handle();
  return make_op_result(a.shape(), std::move(out), {ap},
                        [ap, df](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          if (!ap->requires_grad) return;
                          auto& ga = ctx.of(ap.get());
                          const auto& x = ap->data;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            ga[i] += g[i] * df(x[i]);
                          }
                        });
}

}  // namespace

// ---- elementwise ops -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<real_t> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] + db[i];
  NodePtr ap = a.handle(), bp = b.handle();
  return make_op_result(a.shape(), std::move(out), {ap, bp},
                        [ap, bp](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          if (ap->requires_grad) {
                            auto& ga = ctx.of(ap.get());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (bp->requires_grad) {
                            auto& gb = ctx.of(bp.get());
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined(a, "sub");
  require_defined(b, "sub");
  require_same_shape(a, b, "sub");
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<real_t> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] - db[i];
  NodePtr ap = a.handle(), bp = b.handle();
  return make_op_result(a.shape(), std::move(out), {ap, bp},
                        [ap, bp](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          if (ap->requires_grad) {
                            auto& ga = ctx.of(ap.get());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          }
                          if (bp->requires_grad) {
                            auto& gb = ctx.of(bp.get());
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  require_same_shape(a, b, "mul");
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<real_t> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] * db[i];
  NodePtr ap = a.handle(), bp = b.handle();
  return make_op_result(a.shape(), std::move(out), {ap, bp},
                        [ap, bp](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          if (ap->requires_grad) {
                            auto& ga = ctx.of(ap.get());
                            const auto& vb = bp->data;
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
                          }
                          if (bp->requires_grad) {
                            auto& gb = ctx.of(bp.get());
                            const auto& va = ap->data;
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
                          }
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined(a, "div");
  require_defined(b, "div");
  require_same_shape(a, b, "div");
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<real_t> out(da.size());
  for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] / db[i];
  NodePtr ap = a.handle(), bp = b.handle();
  return make_op_result(a.shape(), std::move(out), {ap, bp},
                        [ap, bp](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          const auto& va = ap->data;
                          const auto& vb = bp->data;
                          if (ap->requires_grad) {
                            auto& ga = ctx.of(ap.get());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
                          }
                          if (bp->requires_grad) {
                            auto& gb = ctx.of(bp.get());
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                            }
                          }
                        });
}

Tensor add_scalar(const Tensor& a, real_t v) {
  return map_unary(a, "add_scalar", [v](real_t x) { return x + v; },
                   [](real_t) { return real_t(1); });
}

Tensor mul_scalar(const Tensor& a, real_t v) {
  return map_unary(a, "mul_scalar", [v](real_t x) { return x * v; },
                   [v](real_t) { return v; });
}

Tensor relu(const Tensor& a) {
  return map_unary(a, "relu",
                   [](real_t x) { return x > 0 ? x : real_t(0); },
                   [](real_t x) { return x > 0 ? real_t(1) : real_t(0); });
}

Tensor abs(const Tensor& a) {
  return map_unary(a, "abs", [](real_t x) { return std::abs(x); },
                   [](real_t x) {
                     return x > 0 ? real_t(1) : (x < 0 ? real_t(-1) : real_t(0));
                   });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (real_t v : a.data()) {
    if (!(v > 0)) {
      throw ValueError("log: input must be strictly positive, got " +
                       std::to_string(v));
    }
  }
  return map_unary(a, "log", [](real_t x) { return std::log(x); },
                   [](real_t x) { return real_t(1) / x; });
}

Tensor sqrt(const Tensor& a) {
  require_defined(a, "sqrt");
  for (real_t v : a.data()) {
    if (v < 0) {
      throw ValueError("sqrt: input must be non-negative, got " +
                       std::to_string(v));
    }
  }
  return map_unary(a, "sqrt", [](real_t x) { return std::sqrt(x); },
                   [](real_t x) { return real_t(0.5) / std::sqrt(x); });
}

Tensor sum_all(const Tensor& a) {
  require_defined(a, "sum_all");
  real_t acc = 0;
  for (real_t v : a.data()) acc += v;
  NodePtr ap = a.handle();
  return make_op_result(Shape{1, 1, 1, 1}, {acc}, {ap},
                        [ap](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          if (!ap->requires_grad) return;
                          auto& ga = ctx.of(ap.get());
                          for (auto& v : ga) v += g[0];
                        });
}

Tensor mean_all(const Tensor& a) {
  require_defined(a, "mean_all");
  const real_t inv = real_t(1) / static_cast<real_t>(a.numel());
  real_t acc = 0;
  for (real_t v : a.data()) acc += v;
  acc *= inv;
  NodePtr ap = a.handle();
  return make_op_result(Shape{1, 1, 1, 1}, {acc}, {ap},
                        [ap, inv](const std::vector<real_t>& g, BackwardCtx& ctx) {
                          if (!ap->requires_grad) return;
                          auto& ga = ctx.of(ap.get());
                          const real_t gv = g[0] * inv;
                          for (auto& v : ga) v += gv;
                        });
}

// ---- conv2d ----------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int co = ws.n, ci = ws.c, k = ws.h;
  if (ws.h != ws.w) {
    throw DimensionError("conv2d: kernel must be square, got " + to_string(ws));
  }
  if (k % 2 == 0 || k < 1) {
    throw ValueError("conv2d: kernel size must be odd, got " + std::to_string(k));
  }
  if (xs.c != ci) {
    throw DimensionError("conv2d: channel axis mismatch: input has " +
                         std::to_string(xs.c) + " channels, weight expects " +
                         std::to_string(ci));
  }
  if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
  if (pad < 0) throw ValueError("conv2d: pad must be >= 0");
  if (bias.defined() && bias.numel() != co) {
    throw DimensionError("conv2d: bias axis mismatch: " +
                         std::to_string(bias.numel()) + " values for " +
                         std::to_string(co) + " output channels");
  }
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw DimensionError("conv2d: output would be empty for input " +
                         to_string(xs) + " with k=" + std::to_string(k));
  }

  const Shape os{xs.n, co, oh, ow};
  std::vector<real_t> out(os.numel(), 0);
  const auto& xd = x.data();
  const auto& wd = weight.data();
  const std::int64_t x_cs = static_cast<std::int64_t>(xs.h) * xs.w;
  const std::int64_t o_cs = static_cast<std::int64_t>(oh) * ow;

  for (int n = 0; n < xs.n; ++n) {
    const real_t* xn = xd.data() + n * xs.c * x_cs;
    real_t* on = out.data() + n * co * o_cs;
    for (int c = 0; c < co; ++c) {
      real_t* oc_ptr = on + c * o_cs;
      if (bias.defined()) {
        const real_t b = bias.data()[c];
        for (std::int64_t i = 0; i < o_cs; ++i) oc_ptr[i] = b;
      }
      const real_t* wc = wd.data() + static_cast<std::int64_t>(c) * ci * k * k;
      for (int ic = 0; ic < ci; ++ic) {
        const real_t* xc = xn + ic * x_cs;
        for (int kh = 0; kh < k; ++kh) {
          const LoopRange rh = valid_range(oh, kh, stride, pad, xs.h);
          for (int kw = 0; kw < k; ++kw) {
            const real_t wv = wc[(ic * k + kh) * k + kw];
            if (wv == 0) continue;
            const LoopRange rw = valid_range(ow, kw, stride, pad, xs.w);
            for (int oy = rh.lo; oy < rh.hi; ++oy) {
              const int iy = oy * stride + kh - pad;
              const real_t* xrow = xc + static_cast<std::int64_t>(iy) * xs.w;
              real_t* orow = oc_ptr + static_cast<std::int64_t>(oy) * ow;
              for (int ox = rw.lo; ox < rw.hi; ++ox) {
                orow[ox] += wv * xrow[ox * stride + kw - pad];
              }
            }
          }
        }
      }
    }
  }

  NodePtr xp = x.handle(), wp = weight.handle();
  NodePtr bp = bias.defined() ? bias.handle() : nullptr;
  std::vector<NodePtr> parents{xp, wp};
  if (bp) parents.push_back(bp);
  auto fn = [xp, wp, bp, stride, pad, xs, ws, os](const std::vector<real_t>& g,
                                                  BackwardCtx& ctx) {
    const int co = ws.n, ci = ws.c, k = ws.h;
    const int oh = os.h, ow = os.w;
    const std::int64_t x_cs = static_cast<std::int64_t>(xs.h) * xs.w;
    const std::int64_t o_cs = static_cast<std::int64_t>(oh) * ow;
    const bool need_x = xp->requires_grad;
    const bool need_w = wp->requires_grad;
    if (need_x || need_w) {
      std::vector<real_t>* gx = need_x ? &ctx.of(xp.get()) : nullptr;
      std::vector<real_t>* gw = need_w ? &ctx.of(wp.get()) : nullptr;
      for (int n = 0; n < xs.n; ++n) {
        const real_t* gn = g.data() + n * co * o_cs;
        const real_t* xn = xp->data.data() + n * xs.c * x_cs;
        for (int c = 0; c < co; ++c) {
          const real_t* gc = gn + c * o_cs;
          const real_t* wc =
              wp->data.data() + static_cast<std::int64_t>(c) * ci * k * k;
          for (int ic = 0; ic < ci; ++ic) {
            const real_t* xc = xn + ic * x_cs;
            real_t* gxc = need_x ? gx->data() + n * xs.c * x_cs + ic * x_cs : nullptr;
            for (int kh = 0; kh < k; ++kh) {
              const LoopRange rh = valid_range(oh, kh, stride, pad, xs.h);
              for (int kw = 0; kw < k; ++kw) {
                const LoopRange rw = valid_range(ow, kw, stride, pad, xs.w);
                const real_t wv = wc[(ic * k + kh) * k + kw];
                real_t wacc = 0;
                for (int oy = rh.lo; oy < rh.hi; ++oy) {
                  const int iy = oy * stride + kh - pad;
                  const real_t* grow = gc + static_cast<std::int64_t>(oy) * ow;
                  const real_t* xrow = xc + static_cast<std::int64_t>(iy) * xs.w;
                  real_t* gxrow =
                      need_x ? gxc + static_cast<std::int64_t>(iy) * xs.w : nullptr;
                  for (int ox = rw.lo; ox < rw.hi; ++ox) {
                    const int ix = ox * stride + kw - pad;
                    const real_t gv = grow[ox];
                    if (need_x) gxrow[ix] += wv * gv;
                    if (need_w) wacc += gv * xrow[ix];
                  }
                }
                if (need_w) {
                  (*gw)[(static_cast<std::int64_t>(c) * ci + ic) * k * k +
                        kh * k + kw] += wacc;
                }
              }
            }
          }
        }
      }
    }
    if (bp && bp->requires_grad) {
      auto& gb = ctx.of(bp.get());
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < co; ++c) {
          const real_t* gc = g.data() + (static_cast<std::int64_t>(n) * co + c) * o_cs;
          real_t acc = 0;
          for (std::int64_t i = 0; i < o_cs; ++i) acc += gc[i];
          gb[c] += acc;
        }
      }
    }
  };
  return make_op_result(os, std::move(out), std::move(parents), std::move(fn));
}

// ---- batchnorm2d -----------------------------------------------------------

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor running_mean, Tensor running_var, bool train,
                   real_t eps, real_t momentum) {
  require_defined(x, "batchnorm2d");
  require_defined(gamma, "batchnorm2d");
  require_defined(beta, "batchnorm2d");
  const Shape xs = x.shape();
  if (gamma.numel() != xs.c || beta.numel() != xs.c ||
      running_mean.numel() != xs.c || running_var.numel() != xs.c) {
    throw DimensionError("batchnorm2d: channel axis mismatch: input has " +
                         std::to_string(xs.c) + " channels");
  }
  if (!(eps > 0)) throw ValueError("batchnorm2d: eps must be > 0");
  const std::int64_t m = static_cast<std::int64_t>(xs.n) * xs.h * xs.w;
  const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
  const auto& xd = x.data();
  const auto& gd = gamma.data();
  const auto& bd = beta.data();

  std::vector<real_t> mean(xs.c, 0), invstd(xs.c, 0);
  if (train) {
    if (m == 1) {
      throw ValueError(
          "batchnorm2d: degenerate statistics, train mode needs n*h*w > 1");
    }
    std::vector<real_t> var(xs.c, 0);
    for (int c = 0; c < xs.c; ++c) {
      real_t acc = 0;
      for (int n = 0; n < xs.n; ++n) {
        const real_t* p = xd.data() + (static_cast<std::int64_t>(n) * xs.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      }
      mean[c] = acc / static_cast<real_t>(m);
      real_t vacc = 0;
      for (int n = 0; n < xs.n; ++n) {
        const real_t* p = xd.data() + (static_cast<std::int64_t>(n) * xs.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const real_t d = p[i] - mean[c];
          vacc += d * d;
        }
      }
      var[c] = vacc / static_cast<real_t>(m);
      invstd[c] = real_t(1) / std::sqrt(var[c] + eps);
    }
    auto& rm = running_mean.data_mut();
    auto& rv = running_var.data_mut();
    const real_t unbias = static_cast<real_t>(m) / static_cast<real_t>(m - 1);
    for (int c = 0; c < xs.c; ++c) {
      rm[c] = (1 - momentum) * rm[c] + momentum * mean[c];
      rv[c] = (1 - momentum) * rv[c] + momentum * var[c] * unbias;
    }
  } else {
    const auto& rm = running_mean.data();
    const auto& rv = running_var.data();
    for (int c = 0; c < xs.c; ++c) {
      mean[c] = rm[c];
      invstd[c] = real_t(1) / std::sqrt(rv[c] + eps);
    }
  }

  const bool track = detail::grad_enabled() &&
                     (x.requires_grad() || gamma.requires_grad() ||
                      beta.requires_grad());
  std::vector<real_t> xhat(track ? xd.size() : 0);
  std::vector<real_t> out(xd.size());
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const std::int64_t base = (static_cast<std::int64_t>(n) * xs.c + c) * plane;
      const real_t mu = mean[c], is = invstd[c], ga = gd[c], be = bd[c];
      for (std::int64_t i = 0; i < plane; ++i) {
        const real_t h = (xd[base + i] - mu) * is;
        if (track) xhat[base + i] = h;
        out[base + i] = ga * h + be;
      }
    }
  }

  NodePtr xp = x.handle(), gp = gamma.handle(), bp = beta.handle();
  auto fn = [xp, gp, bp, xs, plane, m, train, xhat = std::move(xhat),
             invstd = std::move(invstd)](const std::vector<real_t>& g,
                                         BackwardCtx& ctx) {
    const auto& gd = gp->data;
    // per-channel reductions of g and g*xhat
    std::vector<real_t> sum_g(xs.c, 0), sum_gx(xs.c, 0);
    for (int n = 0; n < xs.n; ++n) {
      for (int c = 0; c < xs.c; ++c) {
        const std::int64_t base = (static_cast<std::int64_t>(n) * xs.c + c) * plane;
        real_t sg = 0, sgx = 0;
        for (std::int64_t i = 0; i < plane; ++i) {
          sg += g[base + i];
          sgx += g[base + i] * xhat[base + i];
        }
        sum_g[c] += sg;
        sum_gx[c] += sgx;
      }
    }
    if (bp->requires_grad) {
      auto& gb = ctx.of(bp.get());
      for (int c = 0; c < xs.c; ++c) gb[c] += sum_g[c];
    }
    if (gp->requires_grad) {
      auto& gg = ctx.of(gp.get());
      for (int c = 0; c < xs.c; ++c) gg[c] += sum_gx[c];
    }
    if (xp->requires_grad) {
      auto& gx = ctx.of(xp.get());
      const real_t invm = real_t(1) / static_cast<real_t>(m);
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
          const std::int64_t base = (static_cast<std::int64_t>(n) * xs.c + c) * plane;
          const real_t k = gd[c] * invstd[c];
          if (train) {
            const real_t mg = sum_g[c] * invm;
            const real_t mgx = sum_gx[c] * invm;
            for (std::int64_t i = 0; i < plane; ++i) {
              gx[base + i] += k * (g[base + i] - mg - xhat[base + i] * mgx);
            }
          } else {
            for (std::int64_t i = 0; i < plane; ++i) {
              gx[base + i] += k * g[base + i];
            }
          }
        }
      }
    }
  };
  return make_op_result(xs, std::move(out), {xp, gp, bp}, std::move(fn));
}

// ---- maxpool2d -------------------------------------------------------------

Tensor maxpool2d(const Tensor& x, int k, int stride, int pad) {
  require_defined(x, "maxpool2d");
  const Shape xs = x.shape();
  if (k < 1) throw ValueError("maxpool2d: kernel size must be >= 1");
  if (stride < 1) throw ValueError("maxpool2d: stride must be >= 1");
  if (pad < 0 || 2 * pad >= k + 1) {
    throw ValueError("maxpool2d: pad must satisfy 0 <= 2*pad <= k");
  }
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  if (oh < 1 || ow < 1) {
    throw DimensionError("maxpool2d: output would be empty for input " +
                         to_string(xs));
  }
  const Shape os{xs.n, xs.c, oh, ow};
  const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
  const std::int64_t oplane = static_cast<std::int64_t>(oh) * ow;
  const auto& xd = x.data();
  std::vector<real_t> out(os.numel());
  const bool track = detail::grad_enabled() && x.requires_grad();
  std::vector<std::int64_t> argmax(track ? os.numel() : 0);

  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(xs.n) * xs.c; ++nc) {
    const real_t* xc = xd.data() + nc * plane;
    real_t* oc = out.data() + nc * oplane;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        real_t best = 0;
        std::int64_t best_idx = -1;
        for (int kh = 0; kh < k; ++kh) {
          const int iy = oy * stride + kh - pad;
          if (iy < 0 || iy >= xs.h) continue;
          for (int kw = 0; kw < k; ++kw) {
            const int ix = ox * stride + kw - pad;
            if (ix < 0 || ix >= xs.w) continue;
            const real_t v = xc[static_cast<std::int64_t>(iy) * xs.w + ix];
            // strict > keeps the first maximum in scan order
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = static_cast<std::int64_t>(iy) * xs.w + ix;
            }
          }
        }
        oc[oy * ow + ox] = best;
        if (track) argmax[nc * oplane + oy * ow + ox] = nc * plane + best_idx;
      }
    }
  }

  NodePtr xp = x.handle();
  auto fn = [xp, argmax = std::move(argmax)](const std::vector<real_t>& g,
                                             BackwardCtx& ctx) {
    if (!xp->requires_grad) return;
    auto& gx = ctx.of(xp.get());
    for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
  };
  return make_op_result(os, std::move(out), {xp}, std::move(fn));
}

// ---- pixel_shuffle ---------------------------------------------------------

Tensor pixel_shuffle(const Tensor& x, int r) {
  require_defined(x, "pixel_shuffle");
  if (r < 1) throw ValueError("pixel_shuffle: factor must be >= 1");
  const Shape xs = x.shape();
  const int r2 = r * r;
  if (xs.c % r2 != 0) {
    throw DimensionError("pixel_shuffle: channel count " + std::to_string(xs.c) +
                         " not divisible by r^2 = " + std::to_string(r2));
  }
  const Shape os{xs.n, xs.c / r2, xs.h * r, xs.w * r};
  const auto& xd = x.data();
  std::vector<real_t> out(os.numel());
  for (int n = 0; n < xs.n; ++n) {
    for (int cc = 0; cc < xs.c; ++cc) {
      const int oc = cc / r2;
      const int i = (cc % r2) / r;
      const int j = cc % r;
      const real_t* src =
          xd.data() + (static_cast<std::int64_t>(n) * xs.c + cc) * xs.h * xs.w;
      for (int y = 0; y < xs.h; ++y) {
        real_t* dst = out.data() +
                      ((static_cast<std::int64_t>(n) * os.c + oc) * os.h +
                       (static_cast<std::int64_t>(y) * r + i)) *
                          os.w +
                      j;
        for (int xi = 0; xi < xs.w; ++xi) dst[static_cast<std::int64_t>(xi) * r] = src[y * xs.w + xi];
      }
    }
  }
  NodePtr xp = x.handle();
  auto fn = [xp, xs, os, r, r2](const std::vector<real_t>& g, BackwardCtx& ctx) {
    if (!xp->requires_grad) return;
    auto& gx = ctx.of(xp.get());
    for (int n = 0; n < xs.n; ++n) {
      for (int cc = 0; cc < xs.c; ++cc) {
        const int oc = cc / r2;
        const int i = (cc % r2) / r;
        const int j = cc % r;
        real_t* dst = gx.data() +
                      (static_cast<std::int64_t>(n) * xs.c + cc) * xs.h * xs.w;
        for (int y = 0; y < xs.h; ++y) {
          const real_t* src = g.data() +
                              ((static_cast<std::int64_t>(n) * os.c + oc) * os.h +
                               (static_cast<std::int64_t>(y) * r + i)) *
                                  os.w +
                              j;
          for (int xi = 0; xi < xs.w; ++xi) {
            dst[y * xs.w + xi] += src[static_cast<std::int64_t>(xi) * r];
          }
        }
      }
    }
  };
  return make_op_result(os, std::move(out), {xp}, std::move(fn));
}

// ---- bilinear_upsample -----------------------------------------------------

Tensor bilinear_upsample(const Tensor& x, int factor) {
  require_defined(x, "bilinear_upsample");
  if (factor != 1 && factor != 2 && factor != 4) {
    throw ValueError("bilinear_upsample: factor must be 1, 2 or 4, got " +
                     std::to_string(factor));
  }
  const Shape xs = x.shape();
  if (factor == 1) {
    // identity copy, gradient passes through
    NodePtr xp = x.handle();
    return make_op_result(xs, x.data(), {xp},
                          [xp](const std::vector<real_t>& g, BackwardCtx& ctx) {
                            if (!xp->requires_grad) return;
                            auto& gx = ctx.of(xp.get());
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          });
  }
  const Shape os{xs.n, xs.c, xs.h * factor, xs.w * factor};
  const BilinearAxis ay = bilinear_axis(xs.h, factor);
  const BilinearAxis ax = bilinear_axis(xs.w, factor);
  const auto& xd = x.data();
  std::vector<real_t> out(os.numel());
  const std::int64_t planes = static_cast<std::int64_t>(xs.n) * xs.c;
  for (std::int64_t p = 0; p < planes; ++p) {
    const real_t* src = xd.data() + p * xs.h * xs.w;
    real_t* dst = out.data() + p * os.h * os.w;
    for (int ty = 0; ty < os.h; ++ty) {
      const int y0 = ay.i0[ty], y1 = ay.i1[ty];
      const real_t fy = ay.frac[ty];
      const real_t* r0 = src + static_cast<std::int64_t>(y0) * xs.w;
      const real_t* r1 = src + static_cast<std::int64_t>(y1) * xs.w;
      real_t* orow = dst + static_cast<std::int64_t>(ty) * os.w;
      for (int tx = 0; tx < os.w; ++tx) {
        const int x0 = ax.i0[tx], x1 = ax.i1[tx];
        const real_t fx = ax.frac[tx];
        orow[tx] = (1 - fy) * ((1 - fx) * r0[x0] + fx * r0[x1]) +
                   fy * ((1 - fx) * r1[x0] + fx * r1[x1]);
      }
    }
  }
  NodePtr xp = x.handle();
  auto fn = [xp, xs, os, ay, ax](const std::vector<real_t>& g, BackwardCtx& ctx) {
    if (!xp->requires_grad) return;
    auto& gx = ctx.of(xp.get());
    const std::int64_t planes = static_cast<std::int64_t>(xs.n) * xs.c;
    for (std::int64_t p = 0; p < planes; ++p) {
      real_t* dst = gx.data() + p * xs.h * xs.w;
      const real_t* src = g.data() + p * os.h * os.w;
      for (int ty = 0; ty < os.h; ++ty) {
        const int y0 = ay.i0[ty], y1 = ay.i1[ty];
        const real_t fy = ay.frac[ty];
        const real_t* grow = src + static_cast<std::int64_t>(ty) * os.w;
        for (int tx = 0; tx < os.w; ++tx) {
          const int x0 = ax.i0[tx], x1 = ax.i1[tx];
          const real_t fx = ax.frac[tx];
          const real_t gv = grow[tx];
          dst[static_cast<std::int64_t>(y0) * xs.w + x0] += (1 - fy) * (1 - fx) * gv;
          dst[static_cast<std::int64_t>(y0) * xs.w + x1] += (1 - fy) * fx * gv;
          dst[static_cast<std::int64_t>(y1) * xs.w + x0] += fy * (1 - fx) * gv;
          dst[static_cast<std::int64_t>(y1) * xs.w + x1] += fy * fx * gv;
        }
      }
    }
  };
  return make_op_result(os, std::move(out), {xp}, std::move(fn));
}

// ---- replicate_pad ---------------------------------------------------------

Tensor replicate_pad(const Tensor& x, int p) {
  require_defined(x, "replicate_pad");
  if (p < 0) throw ValueError("replicate_pad: pad must be >= 0");
  const Shape xs = x.shape();
  const Shape os{xs.n, xs.c, xs.h + 2 * p, xs.w + 2 * p};
  const auto& xd = x.data();
  std::vector<real_t> out(os.numel());
  const std::int64_t planes = static_cast<std::int64_t>(xs.n) * xs.c;
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const real_t* src = xd.data() + pl * xs.h * xs.w;
    real_t* dst = out.data() + pl * os.h * os.w;
    for (int y = 0; y < os.h; ++y) {
      const int sy = clampi(y - p, xs.h - 1);
      for (int xq = 0; xq < os.w; ++xq) {
        dst[static_cast<std::int64_t>(y) * os.w + xq] =
            src[static_cast<std::int64_t>(sy) * xs.w + clampi(xq - p, xs.w - 1)];
      }
    }
  }
  NodePtr xp = x.handle();
  auto fn = [xp, xs, os, p, clampi](const std::vector<real_t>& g,
                                    BackwardCtx& ctx) {
    if (!xp->requires_grad) return;
    auto& gx = ctx.of(xp.get());
    const std::int64_t planes = static_cast<std::int64_t>(xs.n) * xs.c;
    for (std::int64_t pl = 0; pl < planes; ++pl) {
      real_t* dst = gx.data() + pl * xs.h * xs.w;
      const real_t* src = g.data() + pl * os.h * os.w;
      for (int y = 0; y < os.h; ++y) {
        const int sy = clampi(y - p, xs.h - 1);
        for (int xq = 0; xq < os.w; ++xq) {
          dst[static_cast<std::int64_t>(sy) * xs.w + clampi(xq - p, xs.w - 1)] +=
              src[static_cast<std::int64_t>(y) * os.w + xq];
        }
      }
    }
  };
  return make_op_result(os, std::move(out), {xp}, std::move(fn));
}

// ---- concat_channels -------------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ValueError("concat_channels: empty input list");
  for (const auto& t : xs) require_defined(t, "concat_channels");
  const Shape first = xs.front().shape();
  int total_c = 0;
  for (const auto& t : xs) {
    const Shape s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_channels: spatial mismatch " +
                           to_string(first) + " vs " + to_string(s));
    }
    total_c += s.c;
  }
  const Shape os{first.n, total_c, first.h, first.w};
  const std::int64_t plane = static_cast<std::int64_t>(first.h) * first.w;
  std::vector<real_t> out(os.numel());
  std::vector<NodePtr> parents;
  parents.reserve(xs.size());
  std::vector<int> channels;
  for (const auto& t : xs) {
    parents.push_back(t.handle());
    channels.push_back(t.shape().c);
  }
  for (int n = 0; n < os.n; ++n) {
    std::int64_t coff = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& src = xs[i].data();
      const std::int64_t len = static_cast<std::int64_t>(channels[i]) * plane;
      std::copy(src.begin() + n * len, src.begin() + (n + 1) * len,
                out.begin() + (static_cast<std::int64_t>(n) * total_c + coff) * plane);
      coff += channels[i];
    }
  }
  auto fn = [parents, channels, os, plane](const std::vector<real_t>& g,
                                           BackwardCtx& ctx) {
    for (int n = 0; n < os.n; ++n) {
      std::int64_t coff = 0;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        const std::int64_t len = static_cast<std::int64_t>(channels[i]) * plane;
        if (parents[i]->requires_grad) {
          auto& gp = ctx.of(parents[i].get());
          const real_t* src =
              g.data() + (static_cast<std::int64_t>(n) * os.c + coff) * plane;
          real_t* dst = gp.data() + n * len;
          for (std::int64_t j = 0; j < len; ++j) dst[j] += src[j];
        }
        coff += channels[i];
      }
    }
  };
  return make_op_result(os, std::move(out), parents, std::move(fn));
}

// ---- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar (1,1,1,1), got " +
                        to_string(loss.shape()));
  }
  Node* root = loss.node();
  if (!root->requires_grad) {
    throw ContractError("backward: loss does not require gradients");
  }

  // Reverse post-order DFS along parent edges = consumers before producers.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx++].get();
      if (parent && parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  BackwardCtx ctx;
  ctx.of(root)[0] = 1;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = ctx.buf.find(node);
    if (found == ctx.buf.end()) continue;
    std::vector<real_t> g = std::move(found->second);
    ctx.buf.erase(found);
    if (node->grad.empty()) {
      node->grad.assign(g.size(), 0);
    }
    for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
    if (node->backward_fn) node->backward_fn(g, ctx);
  }
}

}  // namespace drnet
