#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "drnet/bench.hpp"
#include "drnet/config.hpp"
#include "drnet/data.hpp"
#include "drnet/gradcheck.hpp"
#include "drnet/loss.hpp"
#include "drnet/optim.hpp"

namespace fs = std::filesystem;
using namespace drnet;

namespace {

// DRNET_THREADS caps internal parallelism. Every current code path is
// single-threaded, so values above 1 have no effect yet; the variable is
// parsed so configurations stay forward-compatible.
int env_threads() {
  const char* v = std::getenv("DRNET_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

RunConfig config_from_flag(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_run_config(path);
}

bool parse_size(const std::string& s, int& h, int& w) {
  const auto x = s.find('x');
  if (x == std::string::npos) return false;
  try {
    h = std::stoi(s.substr(0, x));
    w = std::stoi(s.substr(x + 1));
  } catch (...) {
    return false;
  }
  return h > 0 && w > 0;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto comma = csv.find(',', pos);
    const std::string tok =
        csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    out.push_back(std::stoi(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_gen(const std::string& out_dir, int count, const std::string& size,
            std::uint64_t seed, const std::string& split) {
  int h = 64, w = 64;
  if (!parse_size(size, h, w)) {
    std::cerr << "gen: --size must look like 64x64\n";
    return 2;
  }
  RunConfig cfg;
  cfg.data.height = h;
  cfg.data.width = w;
  cfg.data.count = count;
  cfg.data.seed = seed;
  cfg.data.validate();

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.split = split;
  manifest.seed = seed;
  char name[64];
  for (int i = 0; i < count; ++i) {
    const Scene scene = synth_scene(seed + static_cast<std::uint64_t>(i), h, w);
    std::snprintf(name, sizeof(name), "rgb_%05d.ppm", i);
    const std::string rgb_name = name;
    std::snprintf(name, sizeof(name), "depth_%05d.pgm", i);
    const std::string depth_name = name;
    save_ppm((fs::path(out_dir) / rgb_name).string(), scene.rgb);
    save_pgm16((fs::path(out_dir) / depth_name).string(), scene.depth);
    manifest.items.push_back({rgb_name, depth_name});
  }
  write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  write_effective_config(out_dir, cfg);
  std::cout << "wrote " << count << " scenes (" << h << "x" << w << ") to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt) {
  const RunConfig cfg = config_from_flag(config_path);
  const auto dataset = load_dataset(data_dir);

  DRNetModel model(cfg.model_config(), cfg.train.seed);
  AdamAmsgrad optim(cfg.train);

  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const EpochReport r =
        train_epoch(model, dataset, optim, cfg.train, cfg.loss, epoch);
    curve.push_back({{"epoch", epoch},
                     {"mean_total", r.mean_total},
                     {"mean_depth", r.mean_depth},
                     {"mean_grad", r.mean_grad},
                     {"mean_normal", r.mean_normal}});
    std::cout << "epoch " << epoch << "  loss " << r.mean_total << "\n";
  }

  const fs::path out(out_ckpt);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  checkpoint_save(model, &optim, cfg, out_ckpt);
  const std::string dir = out.has_parent_path() ? out.parent_path().string() : ".";
  write_effective_config(dir, cfg);
  std::ofstream report(fs::path(dir) / "train_report.json");
  report << curve.dump(2) << "\n";
  std::cout << "checkpoint: " << out_ckpt << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir) {
  Checkpoint loaded = checkpoint_load(ckpt);
  const auto dataset = load_dataset(data_dir);
  if (dataset.empty()) {
    std::cerr << "eval: dataset is empty\n";
    return 1;
  }
  double rmse = 0, log10 = 0, d1 = 0, d2 = 0, d3 = 0;
  {
    NoGradGuard ng;
    for (const auto& scene : dataset) {
      const Tensor pred = loaded.model->forward(scene.rgb, false).finest();
      const Metrics m = evaluate_metrics(pred, scene.depth);
      rmse += m.rmse;
      log10 += m.log10;
      d1 += m.delta1;
      d2 += m.delta2;
      d3 += m.delta3;
    }
  }
  const auto n = static_cast<double>(dataset.size());
  nlohmann::ordered_json doc{{"count", dataset.size()}, {"rmse", rmse / n},
                             {"log10", log10 / n},     {"delta1", d1 / n},
                             {"delta2", d2 / n},       {"delta3", d3 / n}};
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input,
                const std::string& output) {
  Checkpoint loaded = checkpoint_load(ckpt);
  const Tensor rgb = load_ppm(input);
  NoGradGuard ng;
  const Tensor pred = loaded.model->forward(rgb, false).finest();
  save_pgm16(output, clamp_depth(pred));
  std::cout << "wrote " << output << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& resolutions,
              const std::string& batches, int iters, int warmup,
              const std::string& out_path) {
  const RunConfig cfg = config_from_flag(config_path);
  BenchOptions opts;
  opts.resolutions = parse_int_list(resolutions);
  opts.batch_sizes = parse_int_list(batches);
  opts.iters = iters;
  opts.warmup = warmup;
  const BenchReport report = compare_decoders(cfg.model_config(), opts, 1);

  nlohmann::ordered_json doc = bench_report_json(report);
  doc["config"] = effective_config_json(cfg);
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out);
  os << doc.dump(2) << "\n";
  write_effective_config(out.has_parent_path() ? out.parent_path().string() : ".",
                         cfg);
  std::cout << bench_report_table(report);
  std::cout << "report: " << out_path << "\n";
  return 0;
}

int cmd_gradcheck() { return run_gradcheck_suite(std::cout) ? 0 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-refinement depth estimation at desk scale"};
  app.require_subcommand(1);
  (void)env_threads();

  auto* gen = app.add_subcommand("gen", "Generate a synthetic RGB-D dataset");
  std::string gen_out, gen_size = "64x64", gen_split = "train";
  int gen_count = 200;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of scenes");
  gen->add_option("--size", gen_size, "Scene size HxW (divisible by 32)");
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--split", gen_split, "Split tag (train|val)");

  auto* train = app.add_subcommand("train", "Train on a generated dataset");
  std::string train_config, train_data, train_out;
  train->add_option("--config", train_config, "JSON run config");
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  eval->add_option("--data", eval_data, "Dataset directory")->required();

  auto* predict = app.add_subcommand("predict", "Predict depth for one image");
  std::string pred_ckpt, pred_in, pred_out;
  predict->add_option("--ckpt", pred_ckpt, "Checkpoint path")->required();
  predict->add_option("--input", pred_in, "Input PPM image")->required();
  predict->add_option("--output", pred_out, "Output PGM16 depth map")->required();

  auto* bench = app.add_subcommand("bench", "Compare the two decoders");
  std::string bench_config, bench_res = "64,128,224", bench_batches = "1,4,16";
  std::string bench_out = "bench_report.json";
  int bench_iters = 10, bench_warmup = 2;
  bench->add_option("--config", bench_config, "JSON run config");
  bench->add_option("--resolutions", bench_res, "Comma-separated resolutions");
  bench->add_option("--batches", bench_batches, "Comma-separated batch sizes");
  bench->add_option("--iters", bench_iters, "Timed iterations per point");
  bench->add_option("--warmup", bench_warmup, "Warmup iterations");
  bench->add_option("--out", bench_out, "Report path");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "Run the finite-difference suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_count, gen_size, gen_seed, gen_split);
    if (train->parsed()) return cmd_train(train_config, train_data, train_out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data);
    if (predict->parsed()) return cmd_predict(pred_ckpt, pred_in, pred_out);
    if (bench->parsed()) {
      return cmd_bench(bench_config, bench_res, bench_batches, bench_iters,
                       bench_warmup, bench_out);
    }
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
