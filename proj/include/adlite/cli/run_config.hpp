#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adlite/model.hpp"
#include "adlite/optim.hpp"

namespace adlite::cli {

enum class DataFormat { automatic, ads1, folder };

/// Everything a run needs. Serialized as a flat JSON object with dotted keys
/// ("model.input_size", "train.lr", ...).
struct RunConfig {
  AdliteConfig model;

  std::vector<std::string> data_paths;
  DataFormat data_format = DataFormat::automatic;
  std::string class_map;  // JSON file; empty means the built-in map

  double test_fraction = 0.2;
  double val_fraction = 0.2;  // carved from the training part; 0 disables

  std::string regime;  // informational once applied
  std::size_t batch_size = 64;
  int epochs = 18;
  LrSchedule schedule{0.00095, 8, 0.05, DecayKind::multiplicative};
  LossKind loss = LossKind::cce;

  std::size_t kfold_k = 10;
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  DType precision = DType::f32;

  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Unknown keys and wrongly typed values throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// "key=value" with a JSON value; bare words are taken as strings.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Epoch budget and schedule of a named preset.
void apply_regime(RunConfig& cfg, const std::string& name);

std::string data_format_name(DataFormat f);
DataFormat parse_data_format(const std::string& s);
std::string loss_name(LossKind k);
LossKind parse_loss(const std::string& s);

}  // namespace adlite::cli
