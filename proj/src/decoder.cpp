#include "drnet/decoder.hpp"

namespace drnet {

void DecoderConfig::validate() const {
  for (int w : upI_widths) {
    if (w < 1) throw ConfigError("decoder.upI_widths: every width must be >= 1");
  }
  if (correction_kernel != 1 && correction_kernel != 3 && correction_kernel != 5) {
    throw ConfigError("decoder.correction_kernel: must be 1, 3, or 5");
  }
}

int level_transition_factor(int level) {
  switch (level) {
    case 4:
    case 3:
    case 2:
      return 2;
    case 1:
      return 1;
    case 0:
      return 4;
    default:
      throw ValueError("level must be in 0..4, got " + std::to_string(level));
  }
}

namespace {
DecoderConfig validated(DecoderConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

DRNetDecoder::DRNetDecoder(const DecoderConfig& cfg, const BackboneConfig& bcfg,
                           ParamStore& store, SplitMix64& rng,
                           const std::string& prefix)
    : cfg_(validated(cfg)) {
  for (int i = 0; i < 5; ++i) down_channels_[i + 1] = bcfg.widths[i];

  if (cfg_.second_branch) {
    head5_ = Conv2d(store, prefix + ".head5", down_channels_[5], 1, 1, 1, true, rng);
  }

  // cross-branch feed of the previous depth map into the upI conv input
  const bool upII_feeds_upI = cfg_.second_branch && cfg_.diagonal_connections &&
                              cfg_.diagonal_mode == DiagonalMode::upII_into_upI;

  for (int level = 4; level >= 0; --level) {
    const int prev_c =
        level == 4 ? down_channels_[5] : cfg_.width_at_level(level + 1);
    const int r = level_transition_factor(level);
    const int conv_in = prev_c + (upII_feeds_upI ? 1 : 0);
    const int conv_out = cfg_.width_at_level(level) * r * r;
    const std::string base = prefix + ".upI." + std::to_string(level);
    upI_[level].conv = Conv2d(store, base + ".conv", conv_in, conv_out, 1, 1,
                              false, rng);
    upI_[level].bn = BatchNorm2d(store, base + ".bn", conv_out);

    if (cfg_.second_branch) {
      const bool upI_feeds_corr =
          cfg_.diagonal_mode == DiagonalMode::upII_into_upI ||
          cfg_.diagonal_connections;
      int corr_in = 1;  // the upsampled previous depth map
      if (level >= 1) corr_in += down_channels_[level];
      if (upI_feeds_corr) corr_in += cfg_.width_at_level(level);
      corr_[level] = Conv2d(store, prefix + ".corr." + std::to_string(level),
                            corr_in, 1, cfg_.correction_kernel, 1, true, rng);
    }
  }

  if (!cfg_.second_branch) {
    head0_.emplace(store, prefix + ".head0", cfg_.width_at_level(0), 1, 1, 1,
                   true, rng);
  }
}

Tensor DRNetDecoder::upI_step(int level, const Tensor& upI_prev,
                              const Tensor& upII_prev, bool train) const {
  Tensor in = upI_prev;
  if (cfg_.second_branch && cfg_.diagonal_connections &&
      cfg_.diagonal_mode == DiagonalMode::upII_into_upI) {
    // upII_{i+1} is co-scaled with upI_{i+1}: the bilinear lift is the identity
    in = concat_channels({upI_prev, upII_prev});
  }
  Tensor t = upI_[level].conv.forward(in);
  t = upI_[level].bn.forward(t, train);
  t = relu(t);
  return pixel_shuffle(t, level_transition_factor(level));
}

DepthPyramid DRNetDecoder::forward(const FeaturePyramid& features,
                                   bool train) const {
  DepthPyramid out;
  Tensor upI = features.down[5];  // upI_5

  if (!cfg_.second_branch) {
    for (int level = 4; level >= 0; --level) {
      upI = upI_step(level, upI, {}, train);
    }
    out.upII[0] = head0_->forward(upI);
    out.single_output = true;
    return out;
  }

  Tensor upII = head5_.forward(upI);
  out.upII[5] = upII;

  for (int level = 4; level >= 0; --level) {
    Tensor lifted = bilinear_upsample(upII, level_transition_factor(level));
    Tensor next_upI = upI_step(level, upI, upII, train);

    std::vector<Tensor> corr_in;
    if (level >= 1) corr_in.push_back(features.down[level]);
    corr_in.push_back(lifted);
    if (cfg_.diagonal_mode == DiagonalMode::upII_into_upI ||
        cfg_.diagonal_connections) {
      corr_in.push_back(next_upI);
    }
    Tensor correction = corr_[level].forward(concat_channels(corr_in));

    upII = add(lifted, correction);
    out.upII[level] = upII;
    upI = next_upI;
  }
  return out;
}

FullResDecoder::FullResDecoder(const BackboneConfig& bcfg, ParamStore& store,
                               SplitMix64& rng, const std::string& prefix) {
  int total = 0;
  for (int w : bcfg.widths) total += w;
  head_ = Conv2d(store, prefix + ".head", total, 1, 1, 1, true, rng);
}

Tensor FullResDecoder::forward(const FeaturePyramid& features, int out_h,
                               int out_w) const {
  std::vector<Tensor> maps;
  maps.reserve(5);
  for (int i = 1; i <= 5; ++i) {
    Tensor m = features.down[i];
    // repeated x2 steps and one final x4 step
    while (m.shape().h < out_h) {
      const int remaining = out_h / m.shape().h;
      m = bilinear_upsample(m, remaining == 4 ? 4 : 2);
    }
    if (m.shape().h != out_h || m.shape().w != out_w) {
      throw DimensionError("fullres: feature map does not reach " +
                           std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    maps.push_back(std::move(m));
  }
  Tensor all = concat_channels(maps);
  maps.clear();  // the concat is the live peak, drop the upsampled copies
  return head_.forward(all);
}

DRNetModel::DRNetModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      rng_(seed),
      backbone_(cfg_.backbone, store_, rng_),
      decoder_(cfg_.decoder, cfg_.backbone, store_, rng_) {}

DepthPyramid DRNetModel::forward(const Tensor& img, bool train) {
  return decoder_.forward(backbone_.forward(img, train), train);
}

FeaturePyramid DRNetModel::features(const Tensor& img, bool train) {
  return backbone_.forward(img, train);
}

}  // namespace drnet
