#pragma once

#include <array>
#include <optional>
#include <vector>

#include "drnet/layers.hpp"

namespace drnet {

struct BackboneConfig {
  // channel counts of down_1..down_5
  std::array<int, 5> widths{16, 16, 32, 64, 128};
  // residual blocks in layers 1..4
  std::array<int, 4> blocks_per_layer{1, 1, 1, 1};
  // exclude backbone parameters from optimizer updates
  bool freeze = false;

  void validate() const;
};

// The five feature maps, indexed by level: down[1] at 1/4 of the input,
// down[2] at 1/4, down[3] at 1/8, down[4] at 1/16, down[5] at 1/32.
struct FeaturePyramid {
  std::array<Tensor, 6> down;
};

// Basic residual block: relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).
// conv1 carries the stride; the shortcut is the identity when the stride is
// 1 and channels match, otherwise a strided 1x1 conv.
struct ResidualBlock {
  ResidualBlock() = default;
  ResidualBlock(ParamStore& store, const std::string& prefix, int cin, int cout,
                int stride, SplitMix64& rng);
  Tensor forward(const Tensor& x, bool train) const;

  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;
  std::optional<Conv2d> shortcut;
};

// Micro residual encoder with the stage geometry of a standard residual
// network: a 7x7 stride-2 stem plus 3x3 stride-2 max pooling (downsample
// factor 4 for layer 0), stride-1 layer 1, stride-2 layers 2..4.
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, ParamStore& store, SplitMix64& rng,
           const std::string& prefix = "backbone");

  // img is (n, 3, h, w) in [0, 1] with h, w divisible by 32. Inputs are
  // normalized to mean 0.5 / std 0.5 per channel before the stem.
  FeaturePyramid forward(const Tensor& img, bool train) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  Conv2d stem_;
  BatchNorm2d stem_bn_;
  std::vector<std::vector<ResidualBlock>> layers_;
};

}  // namespace drnet
