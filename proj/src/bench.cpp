#include "drnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "drnet/rng.hpp"

namespace drnet {

namespace {

using Clock = std::chrono::steady_clock;

double percentile(std::vector<double> sorted, double q) {
  const auto idx = static_cast<std::size_t>(
      std::llround(q * static_cast<double>(sorted.size() - 1)));
  return sorted[idx];
}

Tensor random_image(int batch, int res, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<real_t> v(static_cast<std::size_t>(batch) * 3 * res * res);
  for (auto& x : v) x = static_cast<real_t>(rng.uniform());
  return Tensor::from_data({batch, 3, res, res}, std::move(v));
}

}  // namespace

LatencyStats time_forward(const std::function<Tensor(const Tensor&)>& forward_fn,
                          const Tensor& input, int warmup, int iters) {
  if (iters < 10) throw ValueError("time_forward: iters must be >= 10");
  if (warmup < 0) throw ValueError("time_forward: warmup must be >= 0");
  NoGradGuard ng;
  for (int i = 0; i < warmup; ++i) {
    Tensor out = forward_fn(input);
    if (out.requires_grad()) {
      throw ContractError("time_forward: forward allocated gradients");
    }
  }
  std::vector<double> samples;
  samples.reserve(iters);
  for (int i = 0; i < iters; ++i) {
    const auto t0 = Clock::now();
    Tensor out = forward_fn(input);
    const auto t1 = Clock::now();
    if (out.requires_grad()) {
      throw ContractError("time_forward: forward allocated gradients");
    }
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  LatencyStats stats;
  stats.median_ms = percentile(samples, 0.5);
  stats.p10_ms = percentile(samples, 0.1);
  stats.p90_ms = percentile(samples, 0.9);
  stats.iters = iters;
  return stats;
}

std::int64_t peak_activations(
    const std::function<Tensor(const Tensor&)>& forward_fn, const Tensor& input) {
  NoGradGuard ng;
  memcount::reset_peak();
  Tensor out = forward_fn(input);
  if (out.requires_grad()) {
    throw ContractError("peak_activations: forward allocated gradients");
  }
  return memcount::peak();
}

BenchReport compare_decoders(const ModelConfig& cfg, const BenchOptions& opts,
                             std::uint64_t seed) {
  if (opts.resolutions.empty()) {
    throw ValueError("compare_decoders: no resolutions given");
  }
  SplitMix64 init_rng(seed);
  ParamStore store;
  Backbone backbone(cfg.backbone, store, init_rng);
  const std::int64_t backbone_params = store.parameter_count();
  DRNetDecoder drnet_dec(cfg.decoder, cfg.backbone, store, init_rng);
  const std::int64_t drnet_params = store.parameter_count() - backbone_params;
  FullResDecoder fullres_dec(cfg.backbone, store, init_rng);
  const std::int64_t fullres_params =
      store.parameter_count() - backbone_params - drnet_params;

  BenchReport report;
  report.precision_bits = precision_bits();
  report.seed = static_cast<std::int64_t>(seed);

  for (const int res : opts.resolutions) {
    if (res % 32 != 0) {
      throw ValueError("compare_decoders: resolution " + std::to_string(res) +
                       " must be divisible by 32");
    }
    ResolutionReport row;
    row.resolution = res;

    const Tensor img = random_image(1, res, seed ^ static_cast<std::uint64_t>(res));
    FeaturePyramid feats;
    {
      NoGradGuard ng;
      feats = backbone.forward(img, false);
    }

    auto drnet_stage = [&](const Tensor&) {
      return drnet_dec.forward(feats, false).finest();
    };
    auto fullres_stage = [&](const Tensor& in) {
      return fullres_dec.forward(feats, in.shape().h, in.shape().w);
    };
    auto drnet_full = [&](const Tensor& in) {
      return drnet_dec.forward(backbone.forward(in, false), false).finest();
    };
    auto fullres_full = [&](const Tensor& in) {
      return fullres_dec.forward(backbone.forward(in, false), in.shape().h,
                                 in.shape().w);
    };

    row.drnet.decoder_stage = time_forward(drnet_stage, img, opts.warmup, opts.iters);
    row.fullres.decoder_stage =
        time_forward(fullres_stage, img, opts.warmup, opts.iters);
    row.drnet.end_to_end = time_forward(drnet_full, img, opts.warmup, opts.iters);
    row.fullres.end_to_end = time_forward(fullres_full, img, opts.warmup, opts.iters);
    row.drnet.peak_elements = peak_activations(drnet_stage, img);
    row.fullres.peak_elements = peak_activations(fullres_stage, img);
    row.drnet.parameter_count = backbone_params + drnet_params;
    row.fullres.parameter_count = backbone_params + fullres_params;
    row.drnet.images_per_s_bs1 = 1000.0 / row.drnet.end_to_end.median_ms;
    row.fullres.images_per_s_bs1 = 1000.0 / row.fullres.end_to_end.median_ms;

    // throughput sweep; the baseline holds ~2x sum(widths) channels at full
    // resolution live, the refinement decoder a small multiple of the input
    int width_sum = 0;
    for (int w : cfg.backbone.widths) width_sum += w;
    for (const int batch : opts.batch_sizes) {
      const std::int64_t fullres_estimate = static_cast<std::int64_t>(batch) *
                                            res * res * (2 * width_sum + 8) *
                                            static_cast<std::int64_t>(sizeof(real_t));
      ThroughputPoint p_drnet{batch, 0, false};
      ThroughputPoint p_fullres{batch, 0, false};
      if (fullres_estimate > opts.memory_budget_bytes) {
        p_drnet.skipped = p_fullres.skipped = true;
      } else {
        const Tensor batched =
            random_image(batch, res, seed ^ (static_cast<std::uint64_t>(res) << 8));
        const LatencyStats d =
            time_forward(drnet_full, batched, opts.warmup, opts.iters);
        const LatencyStats f =
            time_forward(fullres_full, batched, opts.warmup, opts.iters);
        p_drnet.images_per_s = 1000.0 * batch / d.median_ms;
        p_fullres.images_per_s = 1000.0 * batch / f.median_ms;
      }
      row.drnet.throughput.push_back(p_drnet);
      row.fullres.throughput.push_back(p_fullres);
    }

    row.decoder_speedup =
        row.fullres.decoder_stage.median_ms / row.drnet.decoder_stage.median_ms;
    row.end_to_end_speedup =
        row.fullres.end_to_end.median_ms / row.drnet.end_to_end.median_ms;
    row.peak_activation_ratio = static_cast<double>(row.fullres.peak_elements) /
                                static_cast<double>(row.drnet.peak_elements);
    row.memory_ratio =
        static_cast<double>(row.fullres.peak_elements + row.fullres.parameter_count) /
        static_cast<double>(row.drnet.peak_elements + row.drnet.parameter_count);
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

nlohmann::ordered_json stats_json(const LatencyStats& s) {
  return {{"median_ms", s.median_ms},
          {"p10_ms", s.p10_ms},
          {"p90_ms", s.p90_ms},
          {"iters", s.iters}};
}

nlohmann::ordered_json row_json(const DecoderBenchRow& r) {
  nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
  for (const auto& p : r.throughput) {
    nlohmann::ordered_json e{{"batch", p.batch}};
    if (p.skipped) {
      e["skipped"] = "memory budget";
    } else {
      e["images_per_s"] = p.images_per_s;
    }
    sweep.push_back(e);
  }
  return {{"decoder_stage", stats_json(r.decoder_stage)},
          {"end_to_end", stats_json(r.end_to_end)},
          {"images_per_s_bs1", r.images_per_s_bs1},
          {"throughput", sweep},
          {"peak_activation_elements", r.peak_elements},
          {"parameter_count", r.parameter_count}};
}

}  // namespace

nlohmann::ordered_json bench_report_json(const BenchReport& report) {
  nlohmann::ordered_json doc;
  doc["precision_bits"] = report.precision_bits;
  doc["threads"] = report.threads;
  doc["seed"] = report.seed;
  doc["resolutions"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    doc["resolutions"].push_back(
        {{"resolution", row.resolution},
         {"drnet", row_json(row.drnet)},
         {"fullres", row_json(row.fullres)},
         {"ratios",
          {{"decoder_speedup", row.decoder_speedup},
           {"end_to_end_speedup", row.end_to_end_speedup},
           {"peak_activation_ratio", row.peak_activation_ratio},
           {"memory_ratio", row.memory_ratio}}}});
  }
  return doc;
}

std::string bench_report_table(const BenchReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-6s %-9s %12s %12s %14s %10s\n", "res",
                "decoder", "dec ms(med)", "e2e ms(med)", "peak elems", "params");
  os << line;
  for (const auto& row : report.rows) {
    const struct {
      const char* name;
      const DecoderBenchRow* r;
    } rows[2] = {{"drnet", &row.drnet}, {"fullres", &row.fullres}};
    for (const auto& e : rows) {
      std::snprintf(line, sizeof(line), "%-6d %-9s %12.3f %12.3f %14lld %10lld\n",
                    row.resolution, e.name, e.r->decoder_stage.median_ms,
                    e.r->end_to_end.median_ms,
                    static_cast<long long>(e.r->peak_elements),
                    static_cast<long long>(e.r->parameter_count));
      os << line;
    }
    std::snprintf(line, sizeof(line),
                  "%-6d %-9s %12.2fx %11.2fx %13.2fx %9.2fx\n", row.resolution,
                  "ratio", row.decoder_speedup, row.end_to_end_speedup,
                  row.peak_activation_ratio, row.memory_ratio);
    os << line;
  }
  return os.str();
}

}  // namespace drnet
