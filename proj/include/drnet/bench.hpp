#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drnet/decoder.hpp"

namespace drnet {

struct LatencyStats {
  double median_ms = 0;
  double p10_ms = 0;
  double p90_ms = 0;
  int iters = 0;
};

// Gradient-free timed forwards on the monotonic clock; warmup runs are
// excluded, statistics cover exactly `iters` samples (nearest-rank
// percentiles).
LatencyStats time_forward(const std::function<Tensor(const Tensor&)>& forward_fn,
                          const Tensor& input, int warmup, int iters);

// Peak live tensor elements during one gradient-free forward, activations
// only (parameters and persistent buffers excluded).
std::int64_t peak_activations(
    const std::function<Tensor(const Tensor&)>& forward_fn, const Tensor& input);

struct ThroughputPoint {
  int batch = 0;
  double images_per_s = 0;
  bool skipped = false;  // estimated footprint above the memory budget
};

struct DecoderBenchRow {
  LatencyStats decoder_stage;  // features -> depth, the comparison the
                               // architecture is about
  LatencyStats end_to_end;     // image -> depth including the shared backbone
  double images_per_s_bs1 = 0;
  std::vector<ThroughputPoint> throughput;
  std::int64_t peak_elements = 0;  // decoder stage
  std::int64_t parameter_count = 0;
};

struct ResolutionReport {
  int resolution = 0;
  DecoderBenchRow drnet;
  DecoderBenchRow fullres;
  double decoder_speedup = 0;  // fullres median / drnet median
  double end_to_end_speedup = 0;
  // peak activations only; in a convnet every activation scales with the
  // pixel count, so this ratio is resolution-invariant
  double peak_activation_ratio = 0;
  // (parameters + peak activations) ratio: the analog of net RAM plus
  // per-image RAM, whose parameter floor shrinks relative to activations as
  // resolution grows
  double memory_ratio = 0;
};

struct BenchOptions {
  std::vector<int> resolutions{64, 128, 224};
  std::vector<int> batch_sizes{1, 4, 16};
  int warmup = 2;
  int iters = 10;
  // skip sweep points whose estimated live footprint exceeds this
  std::int64_t memory_budget_bytes = 2LL * 1024 * 1024 * 1024;
};

struct BenchReport {
  std::vector<ResolutionReport> rows;
  int precision_bits = 0;
  int threads = 1;
  std::int64_t seed = 0;
};

// Builds one shared backbone plus both decoders and measures them on
// identical inputs at every resolution.
BenchReport compare_decoders(const ModelConfig& cfg, const BenchOptions& opts,
                             std::uint64_t seed);

nlohmann::ordered_json bench_report_json(const BenchReport& report);
std::string bench_report_table(const BenchReport& report);

}  // namespace drnet
