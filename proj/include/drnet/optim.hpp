#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "drnet/data.hpp"
#include "drnet/decoder.hpp"
#include "drnet/loss.hpp"
#include "drnet/serialize.hpp"

namespace drnet {

struct RunConfig;

struct TrainConfig {
  real_t lr = static_cast<real_t>(1e-4);
  real_t weight_decay = static_cast<real_t>(1e-4);
  real_t beta1 = static_cast<real_t>(0.9);
  real_t beta2 = static_cast<real_t>(0.999);
  real_t eps = static_cast<real_t>(1e-8);
  int epochs = 20;      // chosen, not from the reference configuration
  int batch_size = 4;   // chosen, not from the reference configuration
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  bool flip_augment = false;

  void validate() const;
};

// Adam with the amsgrad running maximum of the second moment. Weight decay
// is folded into the gradient (classic L2). State is kept per parameter name.
class AdamAmsgrad {
 public:
  struct State {
    std::vector<real_t> m, v, vmax;
    std::int64_t t = 0;
  };

  explicit AdamAmsgrad(const TrainConfig& cfg);

  // One update. Parameters named backbone.* are skipped when frozen.
  void step(ParamStore& store, bool freeze_backbone);

  const State* state_of(const std::string& name) const;
  const TrainConfig& config() const { return cfg_; }

  std::vector<NamedArray> export_state() const;
  void import_state(const std::vector<NamedArray>& entries);
  // Round moments to float32 granularity (container precision).
  void quantize_state();

 private:
  TrainConfig cfg_;
  std::map<std::string, State> state_;
};

struct EpochReport {
  double mean_total = 0;
  double mean_depth = 0;   // per-batch sums over levels, averaged
  double mean_grad = 0;
  double mean_normal = 0;
  int batches = 0;
};

// One pass over the dataset in seeded-shuffle order: forward, total loss,
// backward, optimizer step, gradient reset.
EpochReport train_epoch(DRNetModel& model, const std::vector<Scene>& dataset,
                        AdamAmsgrad& optim, const TrainConfig& tcfg,
                        const LossConfig& lcfg, int epoch);

// Checkpoint = DRT1 container + "<path>.json" config sidecar. Saving first
// rounds parameters, buffers and optimizer state to float32 granularity (the
// container's precision), so save -> load -> forward is bit-exact.
void checkpoint_save(DRNetModel& model, AdamAmsgrad* optim, const RunConfig& cfg,
                     const std::string& path);

struct Checkpoint {
  std::unique_ptr<RunConfig> config;
  std::unique_ptr<DRNetModel> model;
  std::unique_ptr<AdamAmsgrad> optim;  // null when no optimizer entries exist
};

// expected, when given, must match the checkpoint's backbone/decoder config.
Checkpoint checkpoint_load(const std::string& path,
                           const RunConfig* expected = nullptr);

}  // namespace drnet
