#include "drnet/backbone.hpp"

namespace drnet {

void BackboneConfig::validate() const {
  for (int w : widths) {
    if (w < 4) {
      throw ConfigError("backbone.widths: every width must be >= 4");
    }
  }
  for (int b : blocks_per_layer) {
    if (b < 1) {
      throw ConfigError("backbone.blocks_per_layer: every count must be >= 1");
    }
  }
}

ResidualBlock::ResidualBlock(ParamStore& store, const std::string& prefix,
                             int cin, int cout, int stride, SplitMix64& rng)
    : conv1(store, prefix + ".conv1", cin, cout, 3, stride, false, rng),
      conv2(store, prefix + ".conv2", cout, cout, 3, 1, false, rng),
      bn1(store, prefix + ".bn1", cout),
      bn2(store, prefix + ".bn2", cout) {
  if (stride != 1 || cin != cout) {
    shortcut.emplace(store, prefix + ".shortcut", cin, cout, 1, stride, false, rng);
  }
}

Tensor ResidualBlock::forward(const Tensor& x, bool train) const {
  Tensor h = relu(bn1.forward(conv1.forward(x), train));
  h = bn2.forward(conv2.forward(h), train);
  Tensor skip = shortcut ? shortcut->forward(x) : x;
  return relu(add(h, skip));
}

namespace {
BackboneConfig validated(BackboneConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

Backbone::Backbone(const BackboneConfig& cfg, ParamStore& store, SplitMix64& rng,
                   const std::string& prefix)
    : cfg_(validated(cfg)),
      stem_(store, prefix + ".layer0.conv", 3, cfg.widths[0], 7, 2, false, rng),
      stem_bn_(store, prefix + ".layer0.bn", cfg.widths[0]) {
  int cin = cfg.widths[0];
  for (int layer = 1; layer <= 4; ++layer) {
    const int cout = cfg.widths[layer];
    std::vector<ResidualBlock> blocks;
    for (int b = 0; b < cfg.blocks_per_layer[layer - 1]; ++b) {
      const int stride = (layer >= 2 && b == 0) ? 2 : 1;
      blocks.emplace_back(store,
                          prefix + ".layer" + std::to_string(layer) + ".block" +
                              std::to_string(b),
                          b == 0 ? cin : cout, cout, stride, rng);
    }
    layers_.push_back(std::move(blocks));
    cin = cout;
  }
}

FeaturePyramid Backbone::forward(const Tensor& img, bool train) const {
  const Shape s = img.shape();
  if (s.c != 3) {
    throw DimensionError("backbone: expected a 3-channel RGB input, got " +
                         to_string(s));
  }
  if (s.h % 32 != 0 || s.w % 32 != 0) {
    throw DimensionError("backbone: input size " + std::to_string(s.h) + "x" +
                         std::to_string(s.w) + " must be divisible by 32");
  }
  // [0,1] -> mean 0.5, std 0.5
  Tensor x = add_scalar(mul_scalar(img, 2), -1);
  x = relu(stem_bn_.forward(stem_.forward(x), train));
  x = maxpool2d(x, 3, 2, 1);

  FeaturePyramid out;
  out.down[1] = x;
  for (int layer = 1; layer <= 4; ++layer) {
    for (const auto& block : layers_[layer - 1]) x = block.forward(x, train);
    out.down[layer + 1] = x;
  }
  return out;
}

}  // namespace drnet
