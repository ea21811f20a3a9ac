#include "drnet/optim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "drnet/config.hpp"

namespace drnet {

void TrainConfig::validate() const {
  if (!(lr >= 0)) throw ConfigError("train.lr: must be >= 0");
  if (weight_decay < 0) throw ConfigError("train.weight_decay: must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw ConfigError("train.betas: must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("train.eps: must be > 0");
  if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
}

AdamAmsgrad::AdamAmsgrad(const TrainConfig& cfg) : cfg_(cfg) { cfg.validate(); }

const AdamAmsgrad::State* AdamAmsgrad::state_of(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? nullptr : &it->second;
}

void AdamAmsgrad::step(ParamStore& store, bool freeze_backbone) {
  for (auto& p : store.params()) {
    if (freeze_backbone && p.name.rfind("backbone.", 0) == 0) continue;
    if (p.value.grad().empty()) {
      throw ContractError("adam_step: missing gradient for parameter '" +
                          p.name + "'");
    }
    State& st = state_[p.name];
    const auto count = static_cast<std::size_t>(p.value.numel());
    if (st.m.empty()) {
      st.m.assign(count, 0);
      st.v.assign(count, 0);
      st.vmax.assign(count, 0);
    }
    st.t += 1;
    const real_t b1 = cfg_.beta1, b2 = cfg_.beta2;
    const real_t bc1 = 1 - static_cast<real_t>(std::pow(b1, st.t));
    const real_t bc2 = 1 - static_cast<real_t>(std::pow(b2, st.t));
    auto& w = p.value.data_mut();
    const auto& grad = p.value.grad();
    for (std::size_t i = 0; i < count; ++i) {
      const real_t g = grad[i] + cfg_.weight_decay * w[i];
      st.m[i] = b1 * st.m[i] + (1 - b1) * g;
      st.v[i] = b2 * st.v[i] + (1 - b2) * g * g;
      if (st.v[i] > st.vmax[i]) st.vmax[i] = st.v[i];
      const real_t mhat = st.m[i] / bc1;
      const real_t vhat = st.vmax[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

namespace {

float f32(real_t v) { return static_cast<float>(v); }

void quantize(std::vector<real_t>& v) {
  for (auto& x : v) x = static_cast<real_t>(static_cast<float>(x));
}

std::vector<float> to_f32(const std::vector<real_t>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f32(v[i]);
  return out;
}

std::vector<real_t> from_f32(const std::vector<float>& v) {
  std::vector<real_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<real_t>(v[i]);
  return out;
}

}  // namespace

void AdamAmsgrad::quantize_state() {
  for (auto& [name, st] : state_) {
    quantize(st.m);
    quantize(st.v);
    quantize(st.vmax);
  }
}

std::vector<NamedArray> AdamAmsgrad::export_state() const {
  std::vector<NamedArray> out;
  for (const auto& [name, st] : state_) {
    const auto n = static_cast<std::uint32_t>(st.m.size());
    out.push_back({"optim." + name + ".m", {n}, to_f32(st.m)});
    out.push_back({"optim." + name + ".v", {n}, to_f32(st.v)});
    out.push_back({"optim." + name + ".vmax", {n}, to_f32(st.vmax)});
    out.push_back({"optim." + name + ".t", {1}, {static_cast<float>(st.t)}});
  }
  return out;
}

void AdamAmsgrad::import_state(const std::vector<NamedArray>& entries) {
  for (const auto& e : entries) {
    if (e.name.rfind("optim.", 0) != 0) continue;
    const std::string rest = e.name.substr(6);
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos) {
      throw ParseError("checkpoint: malformed optimizer entry '" + e.name + "'");
    }
    const std::string param = rest.substr(0, dot);
    const std::string field = rest.substr(dot + 1);
    State& st = state_[param];
    if (field == "m") {
      st.m = from_f32(e.values);
    } else if (field == "v") {
      st.v = from_f32(e.values);
    } else if (field == "vmax") {
      st.vmax = from_f32(e.values);
    } else if (field == "t") {
      st.t = static_cast<std::int64_t>(e.values.at(0));
    } else {
      throw ParseError("checkpoint: unknown optimizer field '" + e.name + "'");
    }
  }
}

// ---- training loop -----------------------------------------------------------

namespace {

// Stacks scenes into one batch pair; flips[i] mirrors sample i horizontally.
std::pair<Tensor, Tensor> stack_batch(const std::vector<const Scene*>& batch,
                                      const std::vector<bool>& flips) {
  const Shape rs = batch.front()->rgb.shape();
  const Shape ds = batch.front()->depth.shape();
  const int b = static_cast<int>(batch.size());
  std::vector<real_t> rgb(static_cast<std::size_t>(b) * 3 * rs.h * rs.w);
  std::vector<real_t> depth(static_cast<std::size_t>(b) * ds.h * ds.w);
  for (int i = 0; i < b; ++i) {
    const auto& src_rgb = batch[i]->rgb.data();
    const auto& src_depth = batch[i]->depth.data();
    if (!(batch[i]->rgb.shape() == rs)) {
      throw DimensionError("train: mixed scene sizes in one dataset");
    }
    const bool flip = flips[i];
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < rs.h; ++y) {
        for (int x = 0; x < rs.w; ++x) {
          const int sx = flip ? rs.w - 1 - x : x;
          rgb[((static_cast<std::size_t>(i) * 3 + c) * rs.h + y) * rs.w + x] =
              src_rgb[(static_cast<std::size_t>(c) * rs.h + y) * rs.w + sx];
        }
      }
    }
    for (int y = 0; y < ds.h; ++y) {
      for (int x = 0; x < ds.w; ++x) {
        const int sx = flip ? ds.w - 1 - x : x;
        depth[(static_cast<std::size_t>(i) * ds.h + y) * ds.w + x] =
            src_depth[static_cast<std::size_t>(y) * ds.w + sx];
      }
    }
  }
  return {Tensor::from_data({b, 3, rs.h, rs.w}, std::move(rgb)),
          Tensor::from_data({b, 1, ds.h, ds.w}, std::move(depth))};
}

}  // namespace

EpochReport train_epoch(DRNetModel& model, const std::vector<Scene>& dataset,
                        AdamAmsgrad& optim, const TrainConfig& tcfg,
                        const LossConfig& lcfg, int epoch) {
  if (dataset.empty()) throw ContractError("train_epoch: empty dataset");
  tcfg.validate();

  // seeded order and augmentation draws for this epoch
  SplitMix64 rng(tcfg.seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1));
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }

  const bool freeze = tcfg.freeze_backbone || model.config().backbone.freeze;
  const bool auxiliary = model.decoder().config().auxiliary_outputs;

  EpochReport report;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(tcfg.batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
    std::vector<const Scene*> batch;
    std::vector<bool> flips;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(&dataset[order[i]]);
      flips.push_back(tcfg.flip_augment && rng.uniform() < 0.5);
    }
    auto [rgb, depth] = stack_batch(batch, flips);

    DepthPyramid pyramid = model.forward(rgb, true);
    LossBreakdown loss = total_loss(pyramid, depth, lcfg, auxiliary);
    backward(loss.total);
    optim.step(model.store(), freeze);
    for (auto& p : model.store().params()) p.value.zero_grad();

    report.mean_total += loss.total_value;
    for (const auto& term : loss.level) {
      if (!term.present) continue;
      report.mean_depth += term.depth;
      report.mean_grad += term.grad;
      report.mean_normal += term.normal;
    }
    ++report.batches;
  }
  report.mean_total /= report.batches;
  report.mean_depth /= report.batches;
  report.mean_grad /= report.batches;
  report.mean_normal /= report.batches;
  return report;
}

// ---- checkpoints ---------------------------------------------------------------

void checkpoint_save(DRNetModel& model, AdamAmsgrad* optim, const RunConfig& cfg,
                     const std::string& path) {
  std::vector<NamedArray> entries;
  for (auto& p : model.store().params()) {
    quantize(p.value.data_mut());
    entries.push_back({p.name, p.logical_dims, to_f32(p.value.data())});
  }
  for (auto& b : model.store().buffers()) {
    quantize(b.value.data_mut());
    entries.push_back({b.name, b.logical_dims, to_f32(b.value.data())});
  }
  if (optim) {
    optim->quantize_state();
    for (auto& e : optim->export_state()) entries.push_back(std::move(e));
  }
  write_drt1(path, entries);

  nlohmann::ordered_json sidecar;
  sidecar["format"] = "drnet-checkpoint";
  sidecar["version"] = 1;
  sidecar["config"] = effective_config_json(cfg);
  std::ofstream os(path + ".json");
  if (!os) throw ParseError("checkpoint: cannot write sidecar " + path + ".json");
  os << sidecar.dump(2) << "\n";
}

Checkpoint checkpoint_load(const std::string& path, const RunConfig* expected) {
  std::ifstream is(path + ".json");
  if (!is) throw ParseError("checkpoint: missing sidecar " + path + ".json");
  nlohmann::json sidecar;
  try {
    is >> sidecar;
  } catch (const std::exception& e) {
    throw ParseError("checkpoint: invalid sidecar JSON: " + std::string(e.what()));
  }
  if (!sidecar.is_object() || sidecar.value("format", "") != "drnet-checkpoint") {
    throw ParseError("checkpoint: sidecar is not a drnet checkpoint");
  }
  if (sidecar.value("version", 0) != 1) {
    throw ParseError("checkpoint: unsupported version");
  }
  if (!sidecar.contains("config")) {
    throw ParseError("checkpoint: sidecar has no config section");
  }
  auto cfg = std::make_unique<RunConfig>(parse_run_config(sidecar["config"]));

  if (expected) {
    const auto want = effective_config_json(*expected);
    const auto have = effective_config_json(*cfg);
    if (want["decoder"] != have["decoder"] || want["backbone"] != have["backbone"]) {
      throw ConfigError(
          "checkpoint: model configuration mismatch between the checkpoint and "
          "the requested backbone/decoder config");
    }
  }

  auto entries = read_drt1(path);
  auto find = [&](const std::string& name) -> const NamedArray* {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };

  auto model = std::make_unique<DRNetModel>(cfg->model_config(), cfg->train.seed);
  auto fill = [&](Parameter& p) {
    const NamedArray* e = find(p.name);
    if (!e) throw ParseError("checkpoint: missing entry '" + p.name + "'");
    if (e->dims != p.logical_dims ||
        static_cast<std::int64_t>(e->values.size()) != p.value.numel()) {
      throw ParseError("checkpoint: entry '" + p.name + "' has mismatched dims");
    }
    p.value.data_mut() = from_f32(e->values);
  };
  for (auto& p : model->store().params()) fill(p);
  for (auto& b : model->store().buffers()) fill(b);

  Checkpoint out;
  out.config = std::move(cfg);
  out.model = std::move(model);
  bool has_optim = false;
  for (const auto& e : entries) {
    if (e.name.rfind("optim.", 0) == 0) {
      has_optim = true;
      break;
    }
  }
  if (has_optim) {
    out.optim = std::make_unique<AdamAmsgrad>(out.config->train);
    out.optim->import_state(entries);
  }
  return out;
}

}  // namespace drnet
