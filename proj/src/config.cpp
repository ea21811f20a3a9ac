#include "drnet/config.hpp"

#include <filesystem>
#include <fstream>

namespace drnet {

void DataConfig::validate() const {
  if (height < 32 || height % 32 != 0 || width < 32 || width % 32 != 0) {
    throw ConfigError("data.height/width: must be positive and divisible by 32");
  }
  if (count < 1) throw ConfigError("data.count: must be >= 1");
  if (min_objects < 0) throw ConfigError("data.min_objects: must be >= 0");
  if (max_objects < min_objects) {
    throw ConfigError("data.max_objects: must be >= data.min_objects");
  }
}

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(path + "." + it.key() + ": unknown key");
  }
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw ConfigError(path + ": must be an object");
}

template <typename T>
T get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": must be a number");
  return v.get<T>();
}

int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": must be an integer");
  return v.get<int>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": must be a boolean");
  return v.get<bool>();
}

template <std::size_t N, typename T>
void get_array(const json& v, const std::string& path, std::array<T, N>& out) {
  if (!v.is_array() || v.size() != N) {
    throw ConfigError(path + ": must be an array of " + std::to_string(N) +
                      " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if constexpr (std::is_integral_v<T>) {
      out[i] = static_cast<T>(get_int(v[i], p));
    } else {
      out[i] = get_number<T>(v[i], p);
    }
  }
}

void parse_backbone(const json& v, BackboneConfig& cfg) {
  require_object(v, "backbone");
  reject_unknown(v, "backbone", {"widths", "blocks_per_layer", "freeze"});
  if (v.contains("widths")) get_array(v["widths"], "backbone.widths", cfg.widths);
  if (v.contains("blocks_per_layer")) {
    get_array(v["blocks_per_layer"], "backbone.blocks_per_layer",
              cfg.blocks_per_layer);
  }
  if (v.contains("freeze")) cfg.freeze = get_bool(v["freeze"], "backbone.freeze");
  cfg.validate();
}

void parse_decoder(const json& v, DecoderConfig& cfg) {
  require_object(v, "decoder");
  reject_unknown(v, "decoder",
                 {"upI_widths", "correction_kernel", "diagonal_connections",
                  "auxiliary_outputs", "second_branch", "diagonal_mode"});
  if (v.contains("upI_widths")) {
    get_array(v["upI_widths"], "decoder.upI_widths", cfg.upI_widths);
  }
  if (v.contains("correction_kernel")) {
    cfg.correction_kernel = get_int(v["correction_kernel"], "decoder.correction_kernel");
    if (cfg.correction_kernel != 1 && cfg.correction_kernel != 3 &&
        cfg.correction_kernel != 5) {
      throw ConfigError("decoder.correction_kernel: must be 1, 3, or 5");
    }
  }
  if (v.contains("diagonal_connections")) {
    cfg.diagonal_connections =
        get_bool(v["diagonal_connections"], "decoder.diagonal_connections");
  }
  if (v.contains("auxiliary_outputs")) {
    cfg.auxiliary_outputs =
        get_bool(v["auxiliary_outputs"], "decoder.auxiliary_outputs");
  }
  if (v.contains("second_branch")) {
    cfg.second_branch = get_bool(v["second_branch"], "decoder.second_branch");
  }
  if (v.contains("diagonal_mode")) {
    const auto& m = v["diagonal_mode"];
    if (!m.is_string()) throw ConfigError("decoder.diagonal_mode: must be a string");
    const std::string s = m.get<std::string>();
    if (s == "upII_into_upI") {
      cfg.diagonal_mode = DiagonalMode::upII_into_upI;
    } else if (s == "upI_into_correction") {
      cfg.diagonal_mode = DiagonalMode::upI_into_correction;
    } else {
      throw ConfigError(
          "decoder.diagonal_mode: must be \"upII_into_upI\" or "
          "\"upI_into_correction\"");
    }
  }
  cfg.validate();
}

void parse_loss(const json& v, LossConfig& cfg) {
  require_object(v, "loss");
  reject_unknown(v, "loss", {"alpha", "level_weights"});
  if (v.contains("alpha")) cfg.alpha = get_number<real_t>(v["alpha"], "loss.alpha");
  if (v.contains("level_weights")) {
    get_array(v["level_weights"], "loss.level_weights", cfg.level_weights);
  }
  cfg.validate();
}

void parse_train(const json& v, TrainConfig& cfg) {
  require_object(v, "train");
  reject_unknown(v, "train",
                 {"lr", "weight_decay", "betas", "eps", "epochs", "batch_size",
                  "seed", "freeze_backbone", "flip_augment"});
  if (v.contains("lr")) cfg.lr = get_number<real_t>(v["lr"], "train.lr");
  if (v.contains("weight_decay")) {
    cfg.weight_decay = get_number<real_t>(v["weight_decay"], "train.weight_decay");
  }
  if (v.contains("betas")) {
    std::array<real_t, 2> betas{cfg.beta1, cfg.beta2};
    get_array(v["betas"], "train.betas", betas);
    cfg.beta1 = betas[0];
    cfg.beta2 = betas[1];
  }
  if (v.contains("eps")) cfg.eps = get_number<real_t>(v["eps"], "train.eps");
  if (v.contains("epochs")) cfg.epochs = get_int(v["epochs"], "train.epochs");
  if (v.contains("batch_size")) {
    cfg.batch_size = get_int(v["batch_size"], "train.batch_size");
  }
  if (v.contains("seed")) {
    if (!v["seed"].is_number_unsigned() && !v["seed"].is_number_integer()) {
      throw ConfigError("train.seed: must be an integer");
    }
    cfg.seed = v["seed"].get<std::uint64_t>();
  }
  if (v.contains("freeze_backbone")) {
    cfg.freeze_backbone = get_bool(v["freeze_backbone"], "train.freeze_backbone");
  }
  if (v.contains("flip_augment")) {
    cfg.flip_augment = get_bool(v["flip_augment"], "train.flip_augment");
  }
  cfg.validate();
}

void parse_data(const json& v, DataConfig& cfg) {
  require_object(v, "data");
  reject_unknown(v, "data",
                 {"height", "width", "count", "seed", "min_objects", "max_objects"});
  if (v.contains("height")) cfg.height = get_int(v["height"], "data.height");
  if (v.contains("width")) cfg.width = get_int(v["width"], "data.width");
  if (v.contains("count")) cfg.count = get_int(v["count"], "data.count");
  if (v.contains("seed")) cfg.seed = v["seed"].get<std::uint64_t>();
  if (v.contains("min_objects")) {
    cfg.min_objects = get_int(v["min_objects"], "data.min_objects");
  }
  if (v.contains("max_objects")) {
    cfg.max_objects = get_int(v["max_objects"], "data.max_objects");
  }
  cfg.validate();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: document must be an object");
  reject_unknown(doc, "config", {"backbone", "decoder", "loss", "train", "data"});
  RunConfig cfg;
  if (doc.contains("backbone")) parse_backbone(doc["backbone"], cfg.backbone);
  if (doc.contains("decoder")) parse_decoder(doc["decoder"], cfg.decoder);
  if (doc.contains("loss")) parse_loss(doc["loss"], cfg.loss);
  if (doc.contains("train")) parse_train(doc["train"], cfg.train);
  if (doc.contains("data")) parse_data(doc["data"], cfg.data);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const std::exception& e) {
    throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

nlohmann::ordered_json effective_config_json(const RunConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["backbone"] = {
      {"widths", cfg.backbone.widths},
      {"blocks_per_layer", cfg.backbone.blocks_per_layer},
      {"freeze", cfg.backbone.freeze},
  };
  doc["decoder"] = {
      {"upI_widths", cfg.decoder.upI_widths},
      {"correction_kernel", cfg.decoder.correction_kernel},
      {"diagonal_connections", cfg.decoder.diagonal_connections},
      {"auxiliary_outputs", cfg.decoder.auxiliary_outputs},
      {"second_branch", cfg.decoder.second_branch},
      {"diagonal_mode", cfg.decoder.diagonal_mode == DiagonalMode::upII_into_upI
                            ? "upII_into_upI"
                            : "upI_into_correction"},
  };
  doc["loss"] = {
      {"alpha", cfg.loss.alpha},
      {"level_weights", cfg.loss.level_weights},
  };
  doc["train"] = {
      {"lr", cfg.train.lr},
      {"weight_decay", cfg.train.weight_decay},
      {"betas", std::array<real_t, 2>{cfg.train.beta1, cfg.train.beta2}},
      {"eps", cfg.train.eps},
      {"epochs", cfg.train.epochs},
      {"batch_size", cfg.train.batch_size},
      {"seed", cfg.train.seed},
      {"freeze_backbone", cfg.train.freeze_backbone},
      {"flip_augment", cfg.train.flip_augment},
  };
  doc["data"] = {
      {"height", cfg.data.height},
      {"width", cfg.data.width},
      {"count", cfg.data.count},
      {"seed", cfg.data.seed},
      {"min_objects", cfg.data.min_objects},
      {"max_objects", cfg.data.max_objects},
  };
  return doc;
}

void write_effective_config(const std::string& dir, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream os(fs::path(dir) / "effective_config.json");
  if (!os) throw ConfigError("config: cannot write effective_config.json in " + dir);
  os << effective_config_json(cfg).dump(2) << "\n";
}

}  // namespace drnet
