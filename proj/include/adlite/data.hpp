#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adlite/rng.hpp"
#include "adlite/tensor.hpp"

namespace adlite {

/// 8-bit image, planar (C, H, W) layout.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// ---------------------------------------------------------------------------
// ADS1 raw dataset files.
//
//   "ADS1" | version u32 = 1 | num_samples u64 | num_classes u32 |
//   image_size u32 | channels u32 | class table (u32 count, then per name
//   u32 byte length + UTF-8 bytes) | per sample: label u32 + channels*size^2
//   u8 pixels (planar, row-major). All integers little-endian.

inline constexpr char kAds1Magic[4] = {'A', 'D', 'S', '1'};
inline constexpr std::uint32_t kAds1Version = 1;

/// Parsed ADS1 file held in memory.
class RawStore {
 public:
  RawStore(std::filesystem::path path, std::vector<std::uint8_t> bytes);

  const std::filesystem::path& path() const { return path_; }
  std::size_t image_size() const { return image_size_; }
  std::size_t channels() const { return channels_; }
  std::size_t num_samples() const { return labels_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::uint32_t label(std::size_t record) const { return labels_.at(record); }
  std::uint64_t record_offset(std::size_t record) const { return offsets_.at(record); }
  Image image(std::size_t record) const;

 private:
  std::filesystem::path path_;
  std::vector<std::uint8_t> bytes_;
  std::size_t image_size_ = 0;
  std::size_t channels_ = 0;
  std::vector<std::string> class_names_;
  std::vector<std::uint32_t> labels_;
  std::vector<std::uint64_t> offsets_;  // byte offset of each record's label
};

struct FileSource {
  std::filesystem::path path;
};

struct RecordSource {
  std::shared_ptr<const RawStore> store;
  std::size_t record = 0;
  std::uint64_t offset = 0;
};

struct SampleRef {
  std::variant<FileSource, RecordSource> source;
  std::uint32_t class_id = 0;
};

/// Label-mapped catalog of samples.
struct DatasetIndex {
  std::vector<std::string> class_names;
  std::vector<SampleRef> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  std::vector<std::uint32_t> labels() const;
  /// Samples at `positions`, same class table.
  DatasetIndex subset(std::span<const std::size_t> positions) const;
  /// Throws DatasetError if a class id is out of range.
  void validate() const;
};

/// Decodes (or copies out of a RawStore) the pixels of one sample.
Image load_sample(const SampleRef& ref);

/// Human-readable source label ("file.ads1#12" or a file path).
std::string describe_source(const SampleRef& ref);

struct Ads1Dataset {
  DatasetIndex index;
  std::shared_ptr<const RawStore> store;
};

/// Throws FormatError (with the byte offset) on bad magic, version or
/// truncation; IoError if the file cannot be read.
Ads1Dataset load_raw_ads1(const std::filesystem::path& path);

struct Ads1Record {
  std::uint32_t label = 0;
  std::vector<std::uint8_t> pixels;  // channels * size * size
};

std::vector<std::uint8_t> encode_ads1(const std::vector<std::string>& class_names,
                                      std::size_t image_size, std::size_t channels,
                                      std::span<const Ads1Record> records);
void write_ads1(const std::filesystem::path& path, const std::vector<std::string>& class_names,
                std::size_t image_size, std::size_t channels, std::span<const Ads1Record> records);

// ---------------------------------------------------------------------------
// Image folders: root/<class_name>/<file>.{png,jpg,jpeg,pgm,ppm}

struct FolderLoadResult {
  DatasetIndex index;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Classes and files ordered lexicographically. Every file is decoded once
/// to verify it; undecodable files are skipped and reported.
FolderLoadResult load_image_folder(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOptions {
  std::size_t input_size = 224;
  std::size_t input_channels = 1;
};

/// Bilinear resize (half-pixel centers), luma grayscale conversion
/// (0.299, 0.587, 0.114) when one channel is requested, scaling to [0, 1].
/// Writes channels * size^2 values to `out`.
template <typename T>
void preprocess_into(const Image& img, const PreprocessOptions& opts, std::span<T> out);

template <typename T>
BasicTensor<T> preprocess(const Image& img, const PreprocessOptions& opts);

/// Decoded images with labels, ready for batching.
struct LabeledImages {
  std::vector<Image> images;
  std::vector<std::uint32_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.size(); }
  std::vector<std::size_t> class_counts() const;
};

LabeledImages materialize(const DatasetIndex& index);

/// (B, C, S, S) batch of the samples at `positions`.
template <typename T>
BasicTensor<T> make_batch(const LabeledImages& set, std::span<const std::size_t> positions,
                          const PreprocessOptions& opts);

// ---------------------------------------------------------------------------
// Splits

/// Positions into the source index; both lists ascending.
struct Partition {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per class, round_half_up(fraction * n_k) samples (at least 1) go to test,
/// chosen by a seeded shuffle. Requires n_k >= 2 for every class.
Partition stratified_partition(const DatasetIndex& index, double fraction, Rng& rng);
std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex& index, double fraction,
                                                       Rng& rng);

/// Stratified k-fold: each class is cut into k chunks whose sizes differ by at
/// most one; fold i tests on chunk i of every class.
std::vector<Partition> kfold_partition(const DatasetIndex& index, std::size_t k, Rng& rng);

std::size_t stratified_test_count(std::size_t class_size, double fraction);

// ---------------------------------------------------------------------------
// Merging

/// "dataset/class" -> merged class name.
using ClassMap = std::map<std::string, std::string>;

struct NamedIndex {
  std::string dataset;
  DatasetIndex index;
};

/// Merged class names are sorted lexicographically. Throws ConfigError naming
/// the first incoming class with no mapping.
DatasetIndex merge_datasets(std::span<const NamedIndex> inputs, const ClassMap& map);

/// AD{MildDemented, VeryMildDemented} -> CI, AD{ModerateDemented} -> AD,
/// AD{NonDemented} -> CN, ADNI{AD, CI, CN} -> themselves.
ClassMap default_class_map();

ClassMap load_class_map(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::vector<std::size_t> counts;  // per class, each >= 1
  std::size_t image_size = 64;
  double noise = 0.05;  // Gaussian sigma on the [0, 1] intensity scale
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class k shows k + 1 concentric rings (class-dependent radii and
/// thickness) around a jittered center, plus Gaussian noise. Records are
/// grouped by class.
std::vector<Ads1Record> synth_records(const SyntheticSpec& spec);
std::vector<std::string> synth_class_names(std::size_t num_classes);
void synth_generate(const SyntheticSpec& spec, const std::filesystem::path& path);

}  // namespace adlite
