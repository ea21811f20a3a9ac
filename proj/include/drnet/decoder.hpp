#pragma once

#include <array>
#include <memory>
#include <optional>

#include "drnet/backbone.hpp"

namespace drnet {

// Which cross-branch edges the "diagonal connections" flag controls.
//
//   upII_into_upI (default): the previous depth map upII_{i+1} is concatenated
//     into the upI conv input at each level. The correction always sees
//     (down_i, upsampled upII, upI_i).
//   upI_into_correction (experimental alternate reading): the upI branch is a
//     pure feedforward chain and the flag instead controls whether upI_i is
//     concatenated into the correction input.
enum class DiagonalMode { upII_into_upI, upI_into_correction };

struct DecoderConfig {
  // channel counts of upI_4..upI_0, in that order
  std::array<int, 5> upI_widths{32, 32, 16, 16, 16};
  int correction_kernel = 1;  // 1, 3 or 5
  bool diagonal_connections = true;
  bool auxiliary_outputs = true;  // consumed by the loss, kept with the model
  bool second_branch = true;
  DiagonalMode diagonal_mode = DiagonalMode::upII_into_upI;

  void validate() const;
  int width_at_level(int level) const { return upI_widths[4 - level]; }
};

// Depth maps by level: upII[5] at 1/32 of the input through upII[0] at full
// resolution (levels 5..1 are absent when the second branch is disabled).
struct DepthPyramid {
  std::array<Tensor, 6> upII;
  bool single_output = false;

  const Tensor& finest() const { return upII[0]; }
  bool has_level(int level) const { return upII[level].defined(); }
};

// Pixel-shuffle factor applied by the upI step at a level, which is also the
// bilinear factor that lifts level i+1 maps to level i. Levels 2 and 1 are
// co-scaled (factor 1) and level 0 spans a factor of 4.
int level_transition_factor(int level);

// The double-refinement decoder: a feature branch (upI) refined by 1x1 conv +
// batchnorm + relu + pixel shuffle per level, and a depth branch (upII) that
// adds a learned single-channel correction to the bilinearly upsampled
// previous estimate.
class DRNetDecoder {
 public:
  DRNetDecoder(const DecoderConfig& cfg, const BackboneConfig& bcfg,
               ParamStore& store, SplitMix64& rng,
               const std::string& prefix = "decoder");

  DepthPyramid forward(const FeaturePyramid& features, bool train) const;

  const DecoderConfig& config() const { return cfg_; }

 private:
  struct UpIStep {
    Conv2d conv;
    BatchNorm2d bn;
  };

  Tensor upI_step(int level, const Tensor& upI_prev, const Tensor& upII_prev,
                  bool train) const;

  DecoderConfig cfg_;
  std::array<int, 6> down_channels_{};
  Conv2d head5_;                     // first depth estimate from upI_5
  std::array<UpIStep, 5> upI_;       // indexed by level 0..4
  std::array<Conv2d, 5> corr_;       // indexed by level 0..4
  std::optional<Conv2d> head0_;      // only without the second branch
};

// Baseline decoder for the benchmark comparison: every backbone feature map
// is bilinearly interpolated to the input size, concatenated, and reduced to
// one channel by a 1x1 conv.
class FullResDecoder {
 public:
  FullResDecoder(const BackboneConfig& bcfg, ParamStore& store, SplitMix64& rng,
                 const std::string& prefix = "fullres");

  Tensor forward(const FeaturePyramid& features, int out_h, int out_w) const;

 private:
  Conv2d head_;
};

struct ModelConfig {
  BackboneConfig backbone;
  DecoderConfig decoder;
};

// Backbone plus DRNet decoder behind one parameter store.
class DRNetModel {
 public:
  DRNetModel(const ModelConfig& cfg, std::uint64_t seed);

  DepthPyramid forward(const Tensor& img, bool train);
  FeaturePyramid features(const Tensor& img, bool train);

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return backbone_; }
  const DRNetDecoder& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  SplitMix64 rng_;  // consumed by parameter initialization only
  Backbone backbone_;
  DRNetDecoder decoder_;
};

}  // namespace drnet
