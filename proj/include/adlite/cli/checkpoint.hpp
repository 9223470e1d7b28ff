#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "adlite/cli/run_config.hpp"

namespace adlite::cli {

// ADLT checkpoint:
//   "ADLT" | version u32 = 1 | header_len u64 | UTF-8 JSON header |
//   little-endian scalar blobs in descriptor order.
// The header holds the effective run config, the Adam step counter (if any)
// and one descriptor {name, shape, dtype, offset} per tensor; offsets are
// relative to the first blob byte.

inline constexpr char kCheckpointMagic[4] = {'A', 'D', 'L', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct LoadedCheckpoint {
  RunConfig config;
  AdliteNet<T> model;
  std::optional<AdamState<T>> adam;
};

/// Parameters in graph order, then BN running statistics, then Adam moments.
template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const RunConfig& config, AdliteNet<T>& model,
                                            const AdamState<T>* adam = nullptr);

/// Throws FormatError naming the offending field.
template <typename T>
LoadedCheckpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     AdliteNet<T>& model, const AdamState<T>* adam = nullptr);

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Reads only the header's run config (to pick the precision before loading).
RunConfig peek_checkpoint_config(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace adlite::cli
