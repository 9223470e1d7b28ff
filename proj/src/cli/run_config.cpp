#include "adlite/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "adlite/errors.hpp"

namespace adlite::cli {

using nlohmann::json;
using nlohmann::ordered_json;

std::string data_format_name(DataFormat f) {
  switch (f) {
    case DataFormat::ads1: return "ads1";
    case DataFormat::folder: return "folder";
    default: return "auto";
  }
}

DataFormat parse_data_format(const std::string& s) {
  if (s == "auto") return DataFormat::automatic;
  if (s == "ads1") return DataFormat::ads1;
  if (s == "folder") return DataFormat::folder;
  throw ConfigError("data.format must be auto, ads1 or folder (got '" + s + "')");
}

std::string loss_name(LossKind k) { return k == LossKind::wcce ? "wcce" : "cce"; }

LossKind parse_loss(const std::string& s) {
  if (s == "cce") return LossKind::cce;
  if (s == "wcce") return LossKind::wcce;
  throw ConfigError("train.loss must be cce or wcce (got '" + s + "')");
}

namespace {

std::string decay_name(DecayKind k) {
  return k == DecayKind::one_shot ? "one_shot" : "multiplicative";
}

DecayKind parse_decay(const std::string& s) {
  if (s == "multiplicative") return DecayKind::multiplicative;
  if (s == "one_shot") return DecayKind::one_shot;
  throw ConfigError("train.alr_kind must be multiplicative or one_shot (got '" + s + "')");
}

template <typename V>
V get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
      if (v.is_number_integer() && v.get<long long>() < 0) throw ConfigError(key + " must be >= 0");
      if (!v.is_number_integer()) throw ConfigError(key + " must be an integer");
    } else if constexpr (std::is_integral_v<V> && !std::is_same_v<V, bool>) {
      if (!v.is_number_integer()) throw ConfigError(key + " must be an integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) throw ConfigError(key + " must be a number");
    } else if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw ConfigError(key + " must be true or false");
    }
    return v.get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void set_key(RunConfig& c, const std::string& key, const json& v) {
  auto& m = c.model;
  if (key == "model.input_size") m.input_size = get_as<std::size_t>(v, key);
  else if (key == "model.input_channels") m.input_channels = get_as<std::size_t>(v, key);
  else if (key == "model.num_classes") m.num_classes = get_as<std::size_t>(v, key);
  else if (key == "model.base_filters") m.base_filters = get_as<std::vector<std::size_t>>(v, key);
  else if (key == "model.first_kernel") m.first_kernel = get_as<std::size_t>(v, key);
  else if (key == "model.other_kernels") m.other_kernels = get_as<std::size_t>(v, key);
  else if (key == "model.dwsc_count") m.dwsc_count = get_as<std::size_t>(v, key);
  else if (key == "model.pcb_enabled") m.pcb_enabled = get_as<bool>(v, key);
  else if (key == "model.pcb_tap_block") m.pcb_tap_block = get_as<std::size_t>(v, key);
  else if (key == "model.pcb_filters") m.pcb_filters = get_as<std::vector<std::size_t>>(v, key);
  else if (key == "model.tx_m") m.tx_m = get_as<double>(v, key);
  else if (key == "model.tx_c") m.tx_c = get_as<double>(v, key);
  else if (key == "model.bn_momentum") m.bn_momentum = get_as<double>(v, key);
  else if (key == "model.bn_eps") m.bn_eps = get_as<double>(v, key);
  else if (key == "data.paths") {
    if (v.is_string()) c.data_paths = {v.get<std::string>()};
    else c.data_paths = get_as<std::vector<std::string>>(v, key);
  } else if (key == "data.format") c.data_format = parse_data_format(get_as<std::string>(v, key));
  else if (key == "data.class_map") c.class_map = get_as<std::string>(v, key);
  else if (key == "split.test_fraction") c.test_fraction = get_as<double>(v, key);
  else if (key == "split.val_fraction") c.val_fraction = get_as<double>(v, key);
  else if (key == "train.regime") {
    const auto name = get_as<std::string>(v, key);
    if (name.empty()) c.regime.clear();
    else apply_regime(c, name);
  } else if (key == "train.batch_size") c.batch_size = get_as<std::size_t>(v, key);
  else if (key == "train.epochs") c.epochs = get_as<int>(v, key);
  else if (key == "train.lr") c.schedule.base_lr = get_as<double>(v, key);
  else if (key == "train.alr_start") {
    if (v.is_null()) c.schedule.decay_start_epoch.reset();
    else c.schedule.decay_start_epoch = get_as<int>(v, key);
  } else if (key == "train.alr_rate") c.schedule.decay_rate = get_as<double>(v, key);
  else if (key == "train.alr_kind") c.schedule.kind = parse_decay(get_as<std::string>(v, key));
  else if (key == "train.loss") c.loss = parse_loss(get_as<std::string>(v, key));
  else if (key == "kfold.k") c.kfold_k = get_as<std::size_t>(v, key);
  else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
  else if (key == "output_dir") c.output_dir = get_as<std::string>(v, key);
  else if (key == "precision") c.precision = parse_dtype(get_as<std::string>(v, key));
  else throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("split.test_fraction must be in (0, 1)");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("split.val_fraction must be in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(schedule.base_lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(schedule.decay_rate >= 0.0 && schedule.decay_rate < 1.0)) {
    throw ConfigError("train.alr_rate must be in [0, 1)");
  }
  if (kfold_k < 2) throw ConfigError("kfold.k must be >= 2");
}

ordered_json to_json(const RunConfig& c) {
  const auto& m = c.model;
  ordered_json j;
  j["model.input_size"] = m.input_size;
  j["model.input_channels"] = m.input_channels;
  j["model.num_classes"] = m.num_classes;
  j["model.base_filters"] = m.base_filters;
  j["model.first_kernel"] = m.first_kernel;
  j["model.other_kernels"] = m.other_kernels;
  j["model.dwsc_count"] = m.dwsc_count;
  j["model.pcb_enabled"] = m.pcb_enabled;
  j["model.pcb_tap_block"] = m.pcb_tap_block;
  j["model.pcb_filters"] = m.pcb_filters;
  j["model.tx_m"] = m.tx_m;
  j["model.tx_c"] = m.tx_c;
  j["model.bn_momentum"] = m.bn_momentum;
  j["model.bn_eps"] = m.bn_eps;
  j["data.paths"] = c.data_paths;
  j["data.format"] = data_format_name(c.data_format);
  j["data.class_map"] = c.class_map;
  j["split.test_fraction"] = c.test_fraction;
  j["split.val_fraction"] = c.val_fraction;
  j["train.regime"] = c.regime;
  j["train.batch_size"] = c.batch_size;
  j["train.epochs"] = c.epochs;
  j["train.lr"] = c.schedule.base_lr;
  j["train.alr_start"] = c.schedule.decay_start_epoch ? ordered_json(*c.schedule.decay_start_epoch)
                                                      : ordered_json(nullptr);
  j["train.alr_rate"] = c.schedule.decay_rate;
  j["train.alr_kind"] = decay_name(c.schedule.kind);
  j["train.loss"] = loss_name(c.loss);
  j["kfold.k"] = c.kfold_k;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["precision"] = std::string(dtype_name(c.precision));
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  // The regime sets epochs and schedule, so it goes first and explicit keys win.
  if (auto it = j.find("train.regime"); it != j.end()) set_key(c, it.key(), *it);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "train.regime") set_key(c, it.key(), it.value());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_key(cfg, key, value);
}

void apply_regime(RunConfig& cfg, const std::string& name) {
  const Regime r = regime_preset(name);
  cfg.regime = r.name;
  cfg.epochs = r.epochs;
  cfg.schedule = r.schedule;
}

}  // namespace adlite::cli
