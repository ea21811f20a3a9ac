#include <iostream>

#include "drnet/config.hpp"
#include "drnet/data.hpp"
#include "drnet/gradcheck.hpp"
#include "drnet/loss.hpp"

namespace drnet {

namespace {

Tensor nudged(const Shape& s, std::uint64_t seed, double margin = 1e-2) {
  SplitMix64 rng(seed);
  std::vector<real_t> v(s.numel());
  for (auto& x : v) {
    double u = rng.uniform(-1.0, 1.0);
    u = u >= 0 ? margin + u * (1 - margin) : -margin + u * (1 - margin);
    x = static_cast<real_t>(u);
  }
  return Tensor::from_data(s, std::move(v));
}

Tensor positive(const Shape& s, std::uint64_t seed, double lo = 0.2, double hi = 2.0) {
  SplitMix64 rng(seed);
  std::vector<real_t> v(s.numel());
  for (auto& x : v) x = static_cast<real_t>(rng.uniform(lo, hi));
  return Tensor::from_data(s, std::move(v));
}

struct Suite {
  std::ostream& out;
  bool ok = true;

  void check(const std::string& name, double err, double tol = 1e-4) {
    const bool pass = err < tol;
    ok = ok && pass;
    out << (pass ? "ok   " : "FAIL ") << name << "  rel=" << err << "\n";
  }
};

}  // namespace

bool run_gradcheck_suite(std::ostream& out) {
  Suite s{out};

  // core ops
  {
    Tensor x = nudged({1, 2, 5, 5}, 101);
    Tensor w = nudged({3, 2, 3, 3}, 102);
    Tensor b = nudged({1, 3, 1, 1}, 103);
    s.check("conv2d/x", finite_diff_check(
                            [&](const Tensor& t) { return sum_all(conv2d(t, w, b, 1, 1)); }, x));
    s.check("conv2d/weight", finite_diff_check(
                                 [&](const Tensor& t) { return sum_all(conv2d(x, t, b, 2, 1)); }, w));
    s.check("conv2d/bias", finite_diff_check(
                               [&](const Tensor& t) { return sum_all(conv2d(x, w, t, 1, 1)); }, b));
  }
  {
    Tensor x = nudged({2, 2, 3, 3}, 104);
    Tensor gamma = positive({1, 2, 1, 1}, 105, 0.5, 1.5);
    Tensor beta = nudged({1, 2, 1, 1}, 106);
    Tensor probe = nudged({2, 2, 3, 3}, 107);
    for (bool train : {true, false}) {
      auto f = [&](const Tensor& t, const Tensor& g, const Tensor& b) {
        return sum_all(mul(batchnorm2d(t, g, b, Tensor::zeros({1, 2, 1, 1}),
                                       Tensor::full({1, 2, 1, 1}, 1), train,
                                       static_cast<real_t>(1e-5),
                                       static_cast<real_t>(0.1)),
                           probe));
      };
      const std::string tag = train ? "train" : "eval";
      s.check("batchnorm2d(" + tag + ")/x",
              finite_diff_check([&](const Tensor& t) { return f(t, gamma, beta); }, x));
      s.check("batchnorm2d(" + tag + ")/gamma",
              finite_diff_check([&](const Tensor& t) { return f(x, t, beta); }, gamma));
      s.check("batchnorm2d(" + tag + ")/beta",
              finite_diff_check([&](const Tensor& t) { return f(x, gamma, t); }, beta));
    }
  }
  s.check("relu", finite_diff_check(
                      [](const Tensor& t) { return sum_all(relu(t)); }, nudged({1, 2, 4, 4}, 108)));
  s.check("maxpool2d",
          finite_diff_check([](const Tensor& t) { return sum_all(maxpool2d(t, 3, 2, 1)); },
                            nudged({1, 2, 6, 6}, 109)));
  {
    Tensor probe = nudged({1, 2, 6, 4}, 110);
    s.check("pixel_shuffle",
            finite_diff_check(
                [&](const Tensor& t) { return sum_all(mul(pixel_shuffle(t, 2), probe)); },
                nudged({1, 8, 3, 2}, 111)));
  }
  for (int f : {2, 4}) {
    Tensor x = nudged({1, 2, 4, 4}, 112 + f);
    Tensor probe = nudged({1, 2, 4 * f, 4 * f}, 120 + f);
    s.check("bilinear_upsample(x" + std::to_string(f) + ")",
            finite_diff_check(
                [&](const Tensor& t) { return sum_all(mul(bilinear_upsample(t, f), probe)); },
                x));
  }
  {
    Tensor probe = nudged({1, 1, 6, 6}, 130);
    s.check("replicate_pad",
            finite_diff_check(
                [&](const Tensor& t) { return sum_all(mul(replicate_pad(t, 1), probe)); },
                nudged({1, 1, 4, 4}, 131)));
  }
  {
    Tensor other = nudged({1, 3, 3, 3}, 132);
    s.check("concat_channels",
            finite_diff_check(
                [&](const Tensor& t) {
                  Tensor y = concat_channels({t, other});
                  return sum_all(mul(y, y));
                },
                nudged({1, 2, 3, 3}, 133)));
  }
  {
    Tensor a = positive({1, 2, 3, 3}, 134);
    Tensor b = positive({1, 2, 3, 3}, 135);
    s.check("add", finite_diff_check([&](const Tensor& t) { return sum_all(add(t, b)); }, a));
    s.check("sub", finite_diff_check([&](const Tensor& t) { return sum_all(sub(b, t)); }, a));
    s.check("mul", finite_diff_check([&](const Tensor& t) { return sum_all(mul(t, b)); }, a));
    s.check("div", finite_diff_check([&](const Tensor& t) { return sum_all(div(b, t)); }, a));
    s.check("abs", finite_diff_check([&](const Tensor& t) { return sum_all(abs(t)); },
                                     nudged({1, 2, 3, 3}, 136)));
    s.check("log", finite_diff_check([&](const Tensor& t) { return sum_all(log(t)); }, a));
    s.check("sqrt", finite_diff_check([&](const Tensor& t) { return sum_all(sqrt(t)); }, a));
    s.check("mean_all",
            finite_diff_check([&](const Tensor& t) { return mean_all(mul(t, t)); }, a));
  }

  // loss terms on co-sized maps
  {
    Tensor d = positive({1, 1, 8, 8}, 137, 1.0, 4.0);
    Tensor g = positive({1, 1, 8, 8}, 138, 1.0, 4.0);
    const auto alpha = static_cast<real_t>(0.5);
    s.check("depth_loss/d",
            finite_diff_check([&](const Tensor& t) { return depth_loss(t, g, alpha); }, d));
    s.check("grad_loss/d",
            finite_diff_check([&](const Tensor& t) { return grad_loss(t, g, alpha); }, d));
    s.check("normal_loss/d",
            finite_diff_check([&](const Tensor& t) { return normal_loss(t, g); }, d));
  }

  // end-to-end: default 64x64 model, loss of the full pyramid. The probe
  // image is continuous-valued: quantized flat regions would put exact ties
  // into the maxpool windows, where the subgradient is not the two-sided
  // derivative the central difference sees.
  {
    const ModelConfig cfg;
    DRNetModel model(cfg, 7);
    const Tensor img = positive({1, 3, 64, 64}, 139, 0.0, 1.0);
    // keep |d - g| away from the abs kink: the untrained model stays near 0
    const Tensor target = add_scalar(synth_scene(11, 64, 64).depth, 1);
    const LossConfig lcfg;
    auto loss_of = [&](const Tensor& in) {
      return total_loss(model.forward(in, false), target, lcfg, true).total;
    };
    s.check("model/loss wrt input", finite_diff_check(loss_of, img, 1e-5, 48));
    s.check("model/sum(upII_0) wrt input",
            finite_diff_check(
                [&](const Tensor& in) {
                  return sum_all(model.forward(in, false).finest());
                },
                img, 1e-5, 48));

    auto model_loss = [&] { return loss_of(img); };
    for (const char* name :
         {"decoder.head5.weight", "decoder.head5.bias", "decoder.corr.0.weight",
          "decoder.upI.2.conv.weight", "backbone.layer0.conv.weight"}) {
      const Parameter* p = model.store().find(name);
      if (!p) {
        s.ok = false;
        out << "FAIL missing parameter " << name << "\n";
        continue;
      }
      s.check(std::string("model/loss wrt ") + name,
              finite_diff_check_inplace(model_loss, p->value, 1e-5, 8));
    }
  }

  out << (s.ok ? "gradcheck: all checks passed\n" : "gradcheck: FAILURES\n");
  return s.ok;
}

}  // namespace drnet
