#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "adlite/data.hpp"
#include "adlite/image_io.hpp"

namespace adlite {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// ADS1

namespace {

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, const fs::path& path)
      : bytes_(bytes), path_(path) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(path_.string() + ": truncated at byte offset " + std::to_string(pos_) +
                        " while reading " + field + " (need " + std::to_string(n) + " bytes, " +
                        std::to_string(bytes_.size() - pos_) + " left)");
    }
  }

  template <typename U>
  U read_le(const char* field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  void skip(std::size_t n, const char* field) {
    need(n, field);
    pos_ += n;
  }

  std::string read_string(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

RawStore::RawStore(fs::path path, std::vector<std::uint8_t> bytes)
    : path_(std::move(path)), bytes_(std::move(bytes)) {
  ByteReader r(bytes_, path_);
  const std::string magic = r.read_string(4, "magic");
  if (magic != std::string(kAds1Magic, 4)) {
    throw FormatError(path_.string() + ": bad magic at byte offset 0 (expected ADS1)");
  }
  const std::size_t version_at = r.offset();
  const auto version = r.read_le<std::uint32_t>("version");
  if (version != kAds1Version) {
    throw FormatError(path_.string() + ": unsupported version " + std::to_string(version) +
                      " at byte offset " + std::to_string(version_at));
  }
  const auto num_samples = r.read_le<std::uint64_t>("num_samples");
  const auto num_classes = r.read_le<std::uint32_t>("num_classes");
  image_size_ = r.read_le<std::uint32_t>("image_size");
  channels_ = r.read_le<std::uint32_t>("channels");
  if (image_size_ == 0 || (channels_ != 1 && channels_ != 3)) {
    throw FormatError(path_.string() + ": invalid image_size/channels in header");
  }
  const std::size_t table_at = r.offset();
  const auto table_count = r.read_le<std::uint32_t>("class table count");
  if (table_count != num_classes) {
    throw FormatError(path_.string() + ": class table count " + std::to_string(table_count) +
                      " != num_classes " + std::to_string(num_classes) + " at byte offset " +
                      std::to_string(table_at));
  }
  for (std::uint32_t i = 0; i < table_count; ++i) {
    const auto len = r.read_le<std::uint32_t>("class name length");
    class_names_.push_back(r.read_string(len, "class name"));
  }
  const std::size_t pixels = channels_ * image_size_ * image_size_;
  labels_.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(num_samples, 1u << 24)));
  for (std::uint64_t i = 0; i < num_samples; ++i) {
    const std::size_t at = r.offset();
    const auto label = r.read_le<std::uint32_t>("sample label");
    if (label >= num_classes) {
      throw FormatError(path_.string() + ": label " + std::to_string(label) +
                        " out of range at byte offset " + std::to_string(at));
    }
    r.skip(pixels, "sample pixels");
    labels_.push_back(label);
    offsets_.push_back(at);
  }
  if (r.offset() != bytes_.size()) {
    throw FormatError(path_.string() + ": " + std::to_string(bytes_.size() - r.offset()) +
                      " trailing bytes at byte offset " + std::to_string(r.offset()));
  }
}

Image RawStore::image(std::size_t record) const {
  const std::size_t start = offsets_.at(record) + 4;
  Image img(image_size_, image_size_, channels_);
  std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(start), img.pixels.size(),
              img.pixels.begin());
  return img;
}

Ads1Dataset load_raw_ads1(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  auto store = std::make_shared<const RawStore>(path, std::move(bytes));
  Ads1Dataset ds;
  ds.store = store;
  ds.index.class_names = store->class_names();
  ds.index.samples.reserve(store->num_samples());
  for (std::size_t i = 0; i < store->num_samples(); ++i) {
    ds.index.samples.push_back({RecordSource{store, i, store->record_offset(i)}, store->label(i)});
  }
  return ds;
}

std::vector<std::uint8_t> encode_ads1(const std::vector<std::string>& class_names,
                                      std::size_t image_size, std::size_t channels,
                                      std::span<const Ads1Record> records) {
  const std::size_t pixels = channels * image_size * image_size;
  std::vector<std::uint8_t> out;
  out.reserve(64 + records.size() * (pixels + 4));
  out.insert(out.end(), kAds1Magic, kAds1Magic + 4);
  put_le<std::uint32_t>(out, kAds1Version);
  put_le<std::uint64_t>(out, records.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(class_names.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(image_size));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(channels));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(class_names.size()));
  for (const auto& name : class_names) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
  }
  for (const auto& rec : records) {
    if (rec.pixels.size() != pixels) throw FormatError("ADS1 record has the wrong pixel count");
    if (rec.label >= class_names.size()) throw LabelError("ADS1 record label out of range");
    put_le<std::uint32_t>(out, rec.label);
    out.insert(out.end(), rec.pixels.begin(), rec.pixels.end());
  }
  return out;
}

void write_ads1(const fs::path& path, const std::vector<std::string>& class_names,
                std::size_t image_size, std::size_t channels, std::span<const Ads1Record> records) {
  const auto bytes = encode_ads1(class_names, image_size, channels, records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// ---------------------------------------------------------------------------
// Index

std::vector<std::size_t> DatasetIndex::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& s : samples) counts.at(s.class_id)++;
  return counts;
}

std::vector<std::uint32_t> DatasetIndex::labels() const {
  std::vector<std::uint32_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.class_id);
  return out;
}

DatasetIndex DatasetIndex::subset(std::span<const std::size_t> positions) const {
  DatasetIndex out;
  out.class_names = class_names;
  out.samples.reserve(positions.size());
  for (auto p : positions) out.samples.push_back(samples.at(p));
  return out;
}

void DatasetIndex::validate() const {
  for (const auto& s : samples) {
    if (s.class_id >= class_names.size()) {
      throw DatasetError("sample " + describe_source(s) + " has class id " +
                         std::to_string(s.class_id) + " outside " +
                         std::to_string(class_names.size()) + " classes");
    }
  }
}

Image load_sample(const SampleRef& ref) {
  if (const auto* rec = std::get_if<RecordSource>(&ref.source)) {
    if (!rec->store) throw StateError("record source without a store");
    return rec->store->image(rec->record);
  }
  return decode_image(std::get<FileSource>(ref.source).path);
}

std::string describe_source(const SampleRef& ref) {
  if (const auto* rec = std::get_if<RecordSource>(&ref.source)) {
    return (rec->store ? rec->store->path().string() : std::string("?")) + "#" +
           std::to_string(rec->record);
  }
  return std::get<FileSource>(ref.source).path.string();
}

FolderLoadResult load_image_folder(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetError("dataset root is not a directory: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  if (class_dirs.empty()) throw DatasetError("no class directories under " + root.string());
  std::sort(class_dirs.begin(), class_dirs.end());

  static const std::vector<std::string> kExts{".png", ".jpg", ".jpeg", ".pgm", ".ppm"};
  FolderLoadResult result;
  for (std::uint32_t c = 0; c < class_dirs.size(); ++c) {
    result.index.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c])) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (std::find(kExts.begin(), kExts.end(), ext) != kExts.end()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t kept = 0;
    for (const auto& f : files) {
      try {
        decode_image(f);
      } catch (const DatasetError& err) {
        ++result.skipped;
        result.warnings.push_back(err.what());
        continue;
      }
      result.index.samples.push_back({FileSource{f}, c});
      ++kept;
    }
    if (kept == 0) {
      throw DatasetError("class directory " + class_dirs[c].string() + " has no decodable images");
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Preprocessing

template <typename T>
void preprocess_into(const Image& img, const PreprocessOptions& opts, std::span<T> out) {
  if (img.width == 0 || img.height == 0 || img.channels == 0) {
    throw DatasetError("cannot preprocess a zero-dimension image");
  }
  if (img.channels != 1 && img.channels != 3) throw DatasetError("images must have 1 or 3 channels");
  const std::size_t s = opts.input_size, oc = opts.input_channels;
  if (out.size() != oc * s * s) throw ShapeError("preprocess output buffer has the wrong size");

  const std::size_t sw = img.width, sh = img.height, plane = sw * sh;
  // Source planes on the [0, 255] scale with channel conversion applied.
  std::vector<float> src(oc * plane);
  if (oc == img.channels) {
    for (std::size_t i = 0; i < src.size(); ++i) src[i] = img.pixels[i];
  } else if (oc == 1) {
    for (std::size_t i = 0; i < plane; ++i) {
      src[i] = 0.299f * img.pixels[i] + 0.587f * img.pixels[plane + i] +
               0.114f * img.pixels[2 * plane + i];
    }
  } else {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) src[c * plane + i] = img.pixels[i];
    }
  }

  if (sw == s && sh == s) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::clamp(static_cast<T>(src[i]) / T{255}, T{0}, T{1});
    }
    return;
  }
  const double sx = static_cast<double>(sw) / static_cast<double>(s);
  const double sy = static_cast<double>(sh) / static_cast<double>(s);
  for (std::size_t y = 0; y < s; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(sh - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < s; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(sw - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < oc; ++c) {
        const float* p = src.data() + c * plane;
        const double top = p[y0 * sw + x0] * (1.0 - wx) + p[y0 * sw + x1] * wx;
        const double bot = p[y1 * sw + x0] * (1.0 - wx) + p[y1 * sw + x1] * wx;
        const double v = (top * (1.0 - wy) + bot * wy) / 255.0;
        out[(c * s + y) * s + x] = static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

template <typename T>
BasicTensor<T> preprocess(const Image& img, const PreprocessOptions& opts) {
  BasicTensor<T> out({opts.input_channels, opts.input_size, opts.input_size});
  preprocess_into<T>(img, opts, out.data());
  return out;
}

std::vector<std::size_t> LabeledImages::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto l : labels) counts.at(l)++;
  return counts;
}

LabeledImages materialize(const DatasetIndex& index) {
  index.validate();
  LabeledImages out;
  out.num_classes = index.num_classes();
  out.images.reserve(index.size());
  out.labels.reserve(index.size());
  for (const auto& s : index.samples) {
    out.images.push_back(load_sample(s));
    out.labels.push_back(s.class_id);
  }
  return out;
}

template <typename T>
BasicTensor<T> make_batch(const LabeledImages& set, std::span<const std::size_t> positions,
                          const PreprocessOptions& opts) {
  const std::size_t per = opts.input_channels * opts.input_size * opts.input_size;
  BasicTensor<T> batch({positions.size(), opts.input_channels, opts.input_size, opts.input_size});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    preprocess_into<T>(set.images.at(positions[i]), opts, batch.data().subspan(i * per, per));
  }
  return batch;
}

#define ADLITE_INSTANTIATE(T)                                                                \
  template void preprocess_into<T>(const Image&, const PreprocessOptions&, std::span<T>);    \
  template BasicTensor<T> preprocess<T>(const Image&, const PreprocessOptions&);             \
  template BasicTensor<T> make_batch<T>(const LabeledImages&, std::span<const std::size_t>, \
                                        const PreprocessOptions&);

ADLITE_INSTANTIATE(float)
ADLITE_INSTANTIATE(double)

#undef ADLITE_INSTANTIATE

}  // namespace adlite
