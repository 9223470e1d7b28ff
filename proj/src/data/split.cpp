#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "adlite/data.hpp"

namespace adlite {

namespace {

std::vector<std::vector<std::size_t>> positions_by_class(const DatasetIndex& index) {
  index.validate();
  std::vector<std::vector<std::size_t>> by_class(index.num_classes());
  for (std::size_t i = 0; i < index.size(); ++i) by_class[index.samples[i].class_id].push_back(i);
  return by_class;
}

}  // namespace

std::size_t stratified_test_count(std::size_t class_size, double fraction) {
  // round half up, at least one test sample, at least one left for training
  auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(class_size) + 0.5));
  n = std::max<std::size_t>(n, 1);
  return std::min(n, class_size - 1);
}

Partition stratified_partition(const DatasetIndex& index, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  auto by_class = positions_by_class(index);
  Partition p;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pos = by_class[c];
    if (pos.size() < 2) {
      throw SplitError("class '" + index.class_names[c] + "' has " + std::to_string(pos.size()) +
                       " samples; a stratified split needs at least 2");
    }
    rng.shuffle(std::span<std::size_t>(pos));
    const std::size_t n_test = stratified_test_count(pos.size(), fraction);
    p.test.insert(p.test.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_test));
    p.train.insert(p.train.end(), pos.begin() + static_cast<std::ptrdiff_t>(n_test), pos.end());
  }
  std::sort(p.train.begin(), p.train.end());
  std::sort(p.test.begin(), p.test.end());
  return p;
}

std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex& index, double fraction,
                                                       Rng& rng) {
  const Partition p = stratified_partition(index, fraction, rng);
  return {index.subset(p.train), index.subset(p.test)};
}

std::vector<Partition> kfold_partition(const DatasetIndex& index, std::size_t k, Rng& rng) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  auto by_class = positions_by_class(index);
  std::vector<std::vector<std::size_t>> fold_tests(k);
  // Folds that receive a class's remainder samples rotate across classes so
  // whole-fold sizes also stay within one of each other.
  std::size_t rotate = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pos = by_class[c];
    if (pos.size() < k) {
      throw SplitError("class '" + index.class_names[c] + "' has " + std::to_string(pos.size()) +
                       " samples, fewer than k = " + std::to_string(k));
    }
    rng.shuffle(std::span<std::size_t>(pos));
    const std::size_t base = pos.size() / k, extra = pos.size() % k;
    std::size_t at = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t fold = (f + rotate) % k;
      const std::size_t len = base + (f < extra ? 1 : 0);
      fold_tests[fold].insert(fold_tests[fold].end(), pos.begin() + static_cast<std::ptrdiff_t>(at),
                              pos.begin() + static_cast<std::ptrdiff_t>(at + len));
      at += len;
    }
    rotate = (rotate + extra) % k;
  }
  std::vector<Partition> out(k);
  std::vector<std::size_t> fold_of(index.size());
  for (std::size_t f = 0; f < k; ++f) {
    for (auto p : fold_tests[f]) fold_of[p] = f;
  }
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < index.size(); ++i) {
      (fold_of[i] == f ? out[f].test : out[f].train).push_back(i);
    }
  }
  return out;
}

DatasetIndex merge_datasets(std::span<const NamedIndex> inputs, const ClassMap& map) {
  std::vector<std::string> merged;
  for (const auto& in : inputs) {
    for (const auto& cls : in.index.class_names) {
      const std::string key = in.dataset + "/" + cls;
      auto it = map.find(key);
      if (it == map.end()) throw ConfigError("class map has no entry for '" + key + "'");
      merged.push_back(it->second);
    }
  }
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());

  DatasetIndex out;
  out.class_names = merged;
  for (const auto& in : inputs) {
    in.index.validate();
    std::vector<std::uint32_t> remap;
    for (const auto& cls : in.index.class_names) {
      const auto& target = map.at(in.dataset + "/" + cls);
      remap.push_back(static_cast<std::uint32_t>(
          std::lower_bound(merged.begin(), merged.end(), target) - merged.begin()));
    }
    for (const auto& s : in.index.samples) out.samples.push_back({s.source, remap[s.class_id]});
  }
  return out;
}

ClassMap default_class_map() {
  return {
      {"AD/MildDemented", "CI"}, {"AD/VeryMildDemented", "CI"}, {"AD/ModerateDemented", "AD"},
      {"AD/NonDemented", "CN"},  {"ADNI/AD", "AD"},             {"ADNI/CI", "CI"},
      {"ADNI/CN", "CN"},
  };
}

ClassMap load_class_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open class map " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("class map " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("class map must be a JSON object");
  ClassMap map;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_string()) throw ConfigError("class map value for '" + key + "' is not a string");
    if (key.find('/') == std::string::npos) {
      throw ConfigError("class map key '" + key + "' is not of the form dataset/class");
    }
    map[key] = value.get<std::string>();
  }
  return map;
}

}  // namespace adlite
