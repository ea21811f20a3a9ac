#pragma once

#include <string>

#include <json.hpp>

#include "drnet/backbone.hpp"
#include "drnet/decoder.hpp"
#include "drnet/loss.hpp"
#include "drnet/optim.hpp"

namespace drnet {

struct DataConfig {
  int height = 64;
  int width = 64;
  int count = 200;
  std::uint64_t seed = 0;
  int min_objects = 3;
  int max_objects = 8;

  void validate() const;
};

// The JSON run configuration: sections backbone, decoder, loss, train, data.
// Every field is optional and falls back to its default; unknown keys are
// rejected with a path-qualified message.
struct RunConfig {
  BackboneConfig backbone;
  DecoderConfig decoder;
  LossConfig loss;
  TrainConfig train;
  DataConfig data;

  ModelConfig model_config() const { return {backbone, decoder}; }
  // backbone.freeze and train.freeze_backbone are synonyms; either freezes.
  bool effective_freeze() const {
    return backbone.freeze || train.freeze_backbone;
  }
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

// The fully-defaulted document; parses back to an identical document.
nlohmann::ordered_json effective_config_json(const RunConfig& cfg);

// Writes effective_config.json into dir.
void write_effective_config(const std::string& dir, const RunConfig& cfg);

}  // namespace drnet
