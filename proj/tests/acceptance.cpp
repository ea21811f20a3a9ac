// Acceptance suite: one criterion per section, one PASS/FAIL line each.
// Exits nonzero if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <vector>

#include "drnet/bench.hpp"
#include "drnet/config.hpp"
#include "drnet/data.hpp"
#include "drnet/gradcheck.hpp"
#include "drnet/loss.hpp"
#include "drnet/optim.hpp"
#include "oracles.hpp"

using namespace drnet;
using Clock = std::chrono::steady_clock;

namespace {

struct Harness {
  int failures = 0;

  void report(int number, const std::string& name, bool pass, double seconds,
              const std::string& detail) {
    std::printf("%s  %d %-22s (%.1fs)  %s\n", pass ? "PASS" : "FAIL", number,
                name.c_str(), seconds, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }

  template <typename Fn>
  void criterion(int number, const std::string& name, Fn&& fn) {
    const auto t0 = Clock::now();
    bool pass = false;
    std::string detail;
    try {
      pass = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    report(number, name, pass, secs, detail);
  }
};

std::vector<Scene> make_scenes(int count, std::uint64_t seed) {
  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (int i = 0; i < count; ++i) {
    scenes.push_back(synth_scene(seed + static_cast<std::uint64_t>(i), 64, 64));
  }
  return scenes;
}

Metrics mean_metrics(DRNetModel& model, const std::vector<Scene>& scenes) {
  NoGradGuard ng;
  Metrics acc;
  for (const auto& s : scenes) {
    const Metrics m =
        evaluate_metrics(model.forward(s.rgb, false).finest(), s.depth);
    acc.rmse += m.rmse;
    acc.log10 += m.log10;
    acc.delta1 += m.delta1;
    acc.delta2 += m.delta2;
    acc.delta3 += m.delta3;
  }
  const auto n = static_cast<double>(scenes.size());
  acc.rmse /= n;
  acc.log10 /= n;
  acc.delta1 /= n;
  acc.delta2 /= n;
  acc.delta3 /= n;
  return acc;
}

double mean_rmse(DRNetModel& model, const std::vector<Scene>& scenes) {
  return mean_metrics(model, scenes).rmse;
}

Tensor random_positive(const Shape& s, std::uint64_t seed, double lo, double hi) {
  SplitMix64 rng(seed);
  std::vector<real_t> v(s.numel());
  for (auto& x : v) x = static_cast<real_t>(rng.uniform(lo, hi));
  return Tensor::from_data(s, std::move(v));
}

}  // namespace

int main() {
  Harness h;

  // 1. finite-difference integrity for every core op and the 64x64 model loss
  h.criterion(1, "gradient-integrity", [](std::string& detail) {
    std::ostringstream sink;
    const auto t0 = Clock::now();
    const bool ok = run_gradcheck_suite(sink);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    detail = "suite " + std::string(ok ? "green" : "red") + ", " +
             std::to_string(secs) + "s < 120s";
    if (!ok) {
      std::cout << sink.str();
      return false;
    }
    return secs < 120.0;
  });

  // 2. exact pyramid scale schedule at 64^2 and 224^2
  h.criterion(2, "scale-schedule", [](std::string& detail) {
    DRNetModel model({}, 1);
    for (int size : {64, 224}) {
      Tensor img = random_positive({1, 3, size, size}, 2, 0.0, 1.0);
      NoGradGuard ng;
      DepthPyramid p = model.forward(img, false);
      const int expect[6] = {size,     size / 4,  size / 4,
                             size / 8, size / 16, size / 32};
      for (int level = 0; level <= 5; ++level) {
        if (!(p.upII[level].shape() ==
              Shape{1, 1, expect[level], expect[level]})) {
          detail = "level " + std::to_string(level) + " at " +
                   std::to_string(size) + " is " + to_string(p.upII[level].shape());
          return false;
        }
      }
    }
    detail = "sizes [h/32,h/16,h/8,h/4,h/4,h] exact at 64 and 224";
    return true;
  });

  // 3. oracle equivalence: pixel shuffle exact, bilinear 1e-6, losses 1e-10
  h.criterion(3, "oracle-equivalence", [](std::string& detail) {
    Tensor x = random_positive({2, 8, 3, 2}, 3, -1.0, 1.0);
    Tensor shuffled = pixel_shuffle(x, 2);
    if (shuffled.data() != oracle::pixel_shuffle_ref(x, 2)) {
      detail = "pixel_shuffle differs from the index-formula oracle";
      return false;
    }
    Tensor y = random_positive({1, 2, 5, 4}, 4, -1.0, 1.0);
    for (int f : {2, 4}) {
      Tensor up = bilinear_upsample(y, f);
      const auto ref = oracle::bilinear_ref(y, f);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (std::abs(up.data()[i] - ref[i]) > 1e-6) {
          detail = "bilinear_upsample deviates above 1e-6";
          return false;
        }
      }
    }
    double worst = 0;
    for (std::uint64_t seed : {5, 6, 7}) {
      Tensor d = random_positive({1, 1, 8, 8}, seed, 0.5, 6.0);
      Tensor g = random_positive({1, 1, 8, 8}, seed + 50, 0.5, 6.0);
      const auto ref = oracle::loss_ref(d, g, 0.5);
      worst = std::max(worst, std::abs(depth_loss(d, g, 0.5).item() - ref.depth));
      worst = std::max(worst, std::abs(grad_loss(d, g, 0.5).item() - ref.grad));
      worst = std::max(worst, std::abs(normal_loss(d, g).item() - ref.normal));
    }
    detail = "loss terms within " + std::to_string(worst) + " of scalar oracle";
    return worst < 1e-10;
  });

  // 4. metric correctness on the three stated examples
  h.criterion(4, "metric-correctness", [](std::string& detail) {
    Tensor g = random_positive({1, 1, 6, 6}, 8, 1.0, 5.0);
    const Metrics ident = evaluate_metrics(g, g);
    if (ident.rmse != 0 || ident.log10 != 0 || ident.delta1 != 1.0 ||
        ident.delta2 != 1.0 || ident.delta3 != 1.0) {
      detail = "identity metrics are off";
      return false;
    }
    const Metrics scaled = evaluate_metrics(mul_scalar(g, 1.3), g);
    if (scaled.delta1 != 0.0 || scaled.delta2 != 1.0 || scaled.delta3 != 1.0) {
      detail = "1.3x thresholds are off";
      return false;
    }
    const Metrics hand = evaluate_metrics(Tensor::from_data({1, 1, 1, 2}, {1, 2}),
                                          Tensor::from_data({1, 1, 1, 2}, {1, 4}));
    if (std::abs(hand.rmse - std::sqrt(2.0)) > 1e-12) {
      detail = "rmse([1,2],[1,4]) != sqrt(2)";
      return false;
    }
    detail = "identity, 1.3x thresholds and sqrt(2) rmse all exact";
    return true;
  });

  // 5. the four Table-V-style configurations build, train and evaluate
  h.criterion(5, "ablation-parity", [](std::string& detail) {
    const auto scenes = make_scenes(12, 40);
    const auto held = make_scenes(4, 4000);
    struct Variant {
      const char* name;
      void (*tweak)(RunConfig&);
    };
    const Variant variants[] = {
        {"full", [](RunConfig&) {}},
        {"no-diagonal", [](RunConfig& c) { c.decoder.diagonal_connections = false; }},
        {"no-auxiliary", [](RunConfig& c) { c.decoder.auxiliary_outputs = false; }},
        {"no-second-branch", [](RunConfig& c) { c.decoder.second_branch = false; }},
    };
    std::string summary;
    for (const auto& variant : variants) {
      RunConfig cfg;
      cfg.train.epochs = 1;
      variant.tweak(cfg);
      DRNetModel model(cfg.model_config(), cfg.train.seed);
      AdamAmsgrad optim(cfg.train);
      train_epoch(model, scenes, optim, cfg.train, cfg.loss, 0);
      if (std::string(variant.name) == "no-second-branch") {
        NoGradGuard ng;
        DepthPyramid p = model.forward(scenes[0].rgb, false);
        if (!p.single_output || !(p.upII[0].shape() == Shape{1, 1, 64, 64})) {
          detail = "no-second-branch did not yield a single full-res output";
          return false;
        }
      }
      const double rmse = mean_rmse(model, held);
      if (!std::isfinite(rmse)) {
        detail = std::string(variant.name) + " produced a non-finite rmse";
        return false;
      }
      summary += std::string(variant.name) + "=" + std::to_string(rmse) + " ";
    }
    detail = "rmse after one epoch: " + summary + "(ordering not acceptance-bearing)";
    return true;
  });

  // 6. convergence smoke test with the reference configuration
  h.criterion(6, "convergence", [](std::string& detail) {
    const auto t0 = Clock::now();
    RunConfig cfg;  // defaults: 200 scenes, 64^2, 20 epochs, lr 1e-4, seed 0
    const auto scenes = make_scenes(cfg.data.count, cfg.data.seed);
    const auto held = make_scenes(32, 777);

    DRNetModel model(cfg.model_config(), cfg.train.seed);
    const Metrics init = mean_metrics(model, held);

    AdamAmsgrad optim(cfg.train);
    double first_epoch = 0, last_epoch = 0;
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
      const EpochReport r =
          train_epoch(model, scenes, optim, cfg.train, cfg.loss, epoch);
      if (epoch == 0) first_epoch = r.mean_total;
      last_epoch = r.mean_total;
    }
    const Metrics final = mean_metrics(model, held);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "loss %.3f -> %.3f, rmse %.3f -> %.3f (%.0f%% better), "
                  "delta1 %.3f -> %.3f, %.0fs",
                  first_epoch, last_epoch, init.rmse, final.rmse,
                  100.0 * (1.0 - final.rmse / init.rmse), init.delta1,
                  final.delta1, secs);
    detail = buf;
    return last_epoch <= 0.5 * first_epoch && final.rmse <= 0.6 * init.rmse &&
           final.delta1 >= init.delta1 && secs < 1800.0;
  });

  // 7. relative performance claim on the shared micro-backbone
  h.criterion(7, "performance-claim", [](std::string& detail) {
    BenchOptions opts;
    opts.resolutions = {64, 224};
    opts.batch_sizes = {1};
    opts.iters = 10;
    opts.warmup = 1;
    const BenchReport report = compare_decoders({}, opts, 1);
    const auto& r64 = report.rows[0];
    const auto& r224 = report.rows[1];
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "224: speedup %.2fx (>=2), peak ratio %.2fx (>=4); memory "
                  "ratio %.2f -> %.2f (growing)",
                  r224.decoder_speedup, r224.peak_activation_ratio,
                  r64.memory_ratio, r224.memory_ratio);
    detail = buf;
    return r224.decoder_speedup >= 2.0 && r224.peak_activation_ratio >= 4.0 &&
           r224.memory_ratio > r64.memory_ratio;
  });

  // 8. determinism and exact round trips
  h.criterion(8, "determinism-roundtrips", [](std::string& detail) {
    const auto scenes = make_scenes(8, 90);
    auto run = [&] {
      RunConfig cfg;
      cfg.train.epochs = 2;
      DRNetModel model(cfg.model_config(), cfg.train.seed);
      AdamAmsgrad optim(cfg.train);
      for (int e = 0; e < cfg.train.epochs; ++e) {
        train_epoch(model, scenes, optim, cfg.train, cfg.loss, e);
      }
      std::vector<std::vector<real_t>> params;
      for (const auto& p : model.store().params()) params.push_back(p.value.data());
      return params;
    };
    if (run() != run()) {
      detail = "fixed-seed training is not bit-reproducible";
      return false;
    }

    RunConfig cfg;
    DRNetModel model(cfg.model_config(), 3);
    checkpoint_save(model, nullptr, cfg, "acceptance_ckpt.drt1");
    Tensor img = random_positive({1, 3, 64, 64}, 91, 0.0, 1.0);
    Checkpoint loaded = checkpoint_load("acceptance_ckpt.drt1");
    {
      NoGradGuard ng;
      if (model.forward(img, false).finest().data() !=
          loaded.model->forward(img, false).finest().data()) {
        detail = "checkpoint round trip changed the forward outputs";
        return false;
      }
    }
    std::remove("acceptance_ckpt.drt1");
    std::remove("acceptance_ckpt.drt1.json");

    const Scene scene = synth_scene(92, 32, 32);
    save_ppm("acceptance_rt.ppm", scene.rgb);
    save_pgm16("acceptance_rt.pgm", scene.depth);
    Tensor rgb = load_ppm("acceptance_rt.ppm");
    Tensor depth = load_pgm16("acceptance_rt.pgm");
    std::remove("acceptance_rt.ppm");
    std::remove("acceptance_rt.pgm");
    if (rgb.data() != scene.rgb.data()) {
      detail = "ppm round trip is not exact on quantized data";
      return false;
    }
    for (std::int64_t i = 0; i < depth.numel(); ++i) {
      const double expect = std::round(scene.depth.data()[i] * 1000.0) / 1000.0;
      if (depth.data()[i] != static_cast<real_t>(expect)) {
        detail = "pgm16 round trip deviates from 1mm quantization";
        return false;
      }
    }
    detail = "training reruns, checkpoint and image round trips all bit-exact";
    return true;
  });

  if (h.failures == 0) {
    std::printf("acceptance: all 8 criteria passed\n");
  } else {
    std::printf("acceptance: %d criterion(s) FAILED\n", h.failures);
  }
  return h.failures == 0 ? 0 : 1;
}
