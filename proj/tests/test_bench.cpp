#include <doctest.h>

#include "drnet/bench.hpp"
#include "test_helpers.hpp"

using namespace drnet;

TEST_SUITE_BEGIN("bench");

TEST_CASE("time_forward covers exactly iters samples and rejects tiny runs") {
  Tensor x = testutil::positive_random({1, 1, 8, 8}, 1);
  auto f = [](const Tensor& t) { return relu(t); };
  const LatencyStats s = time_forward(f, x, 1, 12);
  CHECK(s.iters == 12);
  CHECK(s.p10_ms <= s.median_ms);
  CHECK(s.median_ms <= s.p90_ms);
  CHECK_THROWS_AS(time_forward(f, x, 0, 9), ValueError);
}

TEST_CASE("benchmarked forwards must not build gradient graphs") {
  Tensor x = testutil::positive_random({1, 1, 4, 4}, 2).clone(true);
  auto leaky = [&](const Tensor&) {
    // escapes the no-grad guard on purpose
    Tensor y = relu(x);
    y.node()->requires_grad = true;
    return y;
  };
  CHECK_THROWS_AS(peak_activations(leaky, x), ContractError);
}

TEST_CASE("peak_activations is deterministic and sees the fullres concat") {
  ParamStore store;
  SplitMix64 rng(3);
  Backbone backbone({}, store, rng);
  FullResDecoder fullres({}, store, rng);
  DRNetDecoder drnet_dec({}, {}, store, rng);

  Tensor img = testutil::positive_random({1, 3, 64, 64}, 4, 0.0, 1.0);
  FeaturePyramid feats;
  {
    NoGradGuard ng;
    feats = backbone.forward(img, false);
  }
  auto fullres_fn = [&](const Tensor&) { return fullres.forward(feats, 64, 64); };
  auto drnet_fn = [&](const Tensor&) {
    return drnet_dec.forward(feats, false).finest();
  };
  const std::int64_t peak_full = peak_activations(fullres_fn, img);
  const std::int64_t peak_drnet = peak_activations(drnet_fn, img);
  // default widths concatenate to 240+ channels at full resolution
  CHECK(peak_full >= 240 * 64 * 64);
  // the refinement decoder stays well under a quarter of that
  CHECK(peak_drnet * 4 <= peak_full);
  CHECK(peak_activations(fullres_fn, img) == peak_full);
  CHECK(peak_activations(drnet_fn, img) == peak_drnet);
}

TEST_CASE("compare_decoders emits ratios and absolute numbers per resolution") {
  BenchOptions opts;
  opts.resolutions = {64};
  opts.batch_sizes = {1, 2};
  opts.iters = 10;
  opts.warmup = 1;
  const BenchReport report = compare_decoders({}, opts, 1);
  REQUIRE(report.rows.size() == 1);
  const auto& row = report.rows[0];
  CHECK(row.resolution == 64);
  CHECK(row.drnet.decoder_stage.median_ms > 0);
  CHECK(row.fullres.decoder_stage.median_ms > 0);
  CHECK(row.drnet.peak_elements > 0);
  CHECK(row.peak_activation_ratio > 1.0);
  CHECK(row.memory_ratio > 1.0);
  CHECK(row.decoder_speedup > 0);
  CHECK(row.drnet.parameter_count > 0);
  REQUIRE(row.drnet.throughput.size() == 2);
  CHECK(row.drnet.throughput[0].batch == 1);
  CHECK(row.drnet.throughput[1].batch == 2);

  const auto doc = bench_report_json(report);
  CHECK(doc["resolutions"].size() == 1);
  CHECK(doc["resolutions"][0]["ratios"].contains("memory_ratio"));
  CHECK_FALSE(bench_report_table(report).empty());
}

TEST_CASE("quadrupling the pixels at least doubles the fullres latency") {
  BenchOptions opts;
  opts.resolutions = {64, 128};
  opts.batch_sizes = {1};
  opts.iters = 10;
  opts.warmup = 1;
  const BenchReport report = compare_decoders({}, opts, 3);
  CHECK(report.rows[1].fullres.decoder_stage.median_ms >=
        2.0 * report.rows[0].fullres.decoder_stage.median_ms);
}

TEST_CASE("sweep points over the memory budget are skipped, not run") {
  BenchOptions opts;
  opts.resolutions = {64};
  opts.batch_sizes = {1, 64};
  opts.iters = 10;
  opts.warmup = 0;
  opts.memory_budget_bytes = 64LL * 1024 * 1024;
  const BenchReport report = compare_decoders({}, opts, 2);
  const auto& sweep = report.rows[0].drnet.throughput;
  REQUIRE(sweep.size() == 2);
  CHECK_FALSE(sweep[0].skipped);
  CHECK(sweep[1].skipped);
}

TEST_SUITE_END();
