#include "adlite/cli/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "adlite/errors.hpp"

namespace adlite::cli {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> b, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[at + i]) << (8 * i);
  return v;
}

template <typename T>
void put_scalars(std::vector<std::uint8_t>& out, std::span<const T> values) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : values) put_le(out, std::bit_cast<Bits>(v));
}

template <typename T>
void get_scalars(std::span<const std::uint8_t> b, std::size_t at, std::span<T> values) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<T>(get_le<Bits>(b, at + i * sizeof(T)));
  }
}

template <typename T>
std::vector<std::pair<std::string, BasicTensor<T>*>> tensor_list(AdliteNet<T>& model,
                                                                  AdamState<T>* adam) {
  std::vector<std::pair<std::string, BasicTensor<T>*>> out;
  auto params = model.parameters();
  for (auto* p : params) out.emplace_back(p->name, &p->value);
  for (auto& b : model.buffers()) out.emplace_back(b.name, b.tensor);
  if (adam) {
    if (adam->m.size() != params.size() || adam->v.size() != params.size()) {
      throw StateError("adam state does not match the model's parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back("adam.m." + params[i]->name, &adam->m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) out.emplace_back("adam.v." + params[i]->name, &adam->v[i]);
  }
  return out;
}

struct Header {
  json doc;
  std::size_t blob_start = 0;
};

Header parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("checkpoint: truncated preamble");
  if (!std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin())) {
    throw FormatError("checkpoint: bad magic (expected ADLT)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - 16) throw FormatError("checkpoint: header_len exceeds file size");
  Header h;
  h.blob_start = 16 + static_cast<std::size_t>(header_len);
  h.doc = json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(h.blob_start),
                      nullptr, false);
  if (h.doc.is_discarded() || !h.doc.is_object()) throw FormatError("checkpoint: header is not JSON");
  for (const char* key : {"config", "tensors", "adam_step"}) {
    if (!h.doc.contains(key)) throw FormatError(std::string("checkpoint: header lacks '") + key + "'");
  }
  return h;
}

RunConfig header_config(const json& doc) {
  try {
    return run_config_from_json(doc.at("config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: config: ") + e.what());
  }
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const RunConfig& config, AdliteNet<T>& model,
                                            const AdamState<T>* adam) {
  auto tensors = tensor_list(model, const_cast<AdamState<T>*>(adam));
  ordered_json header;
  header["config"] = to_json(config);
  header["adam_step"] = adam ? ordered_json(adam->step) : ordered_json(nullptr);
  ordered_json descs = ordered_json::array();
  std::vector<std::uint8_t> blobs;
  for (const auto& [name, t] : tensors) {
    ordered_json d;
    d["name"] = name;
    d["shape"] = t->shape();
    d["dtype"] = std::string(dtype_name(dtype_of<T>()));
    d["offset"] = blobs.size();
    descs.push_back(std::move(d));
    put_scalars<T>(blobs, t->data());
  }
  header["tensors"] = std::move(descs);
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

template <typename T>
LoadedCheckpoint<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const Header h = parse_header(bytes);
  RunConfig config = header_config(h.doc);
  try {
    config.model.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: config: ") + e.what());
  }
  if (config.precision != dtype_of<T>()) {
    throw FormatError("checkpoint: precision is " + std::string(dtype_name(config.precision)));
  }
  Rng rng(0);
  LoadedCheckpoint<T> out{config, AdliteNet<T>(config.model, rng), std::nullopt};
  const json& step = h.doc.at("adam_step");
  if (!step.is_null()) {
    if (!step.is_number_unsigned()) throw FormatError("checkpoint: adam_step must be an integer");
    AdamState<T> st;
    st.step = step.get<std::uint64_t>();
    for (const auto* p : out.model.parameters()) {
      st.m.emplace_back(p->value.shape());
      st.v.emplace_back(p->value.shape());
    }
    out.adam = std::move(st);
  }
  auto tensors = tensor_list(out.model, out.adam ? &*out.adam : nullptr);
  const json& descs = h.doc.at("tensors");
  if (!descs.is_array() || descs.size() != tensors.size()) {
    throw FormatError("checkpoint: tensors: expected " + std::to_string(tensors.size()) +
                      " descriptors");
  }
  const std::size_t blob_bytes = bytes.size() - h.blob_start;
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, t] = tensors[i];
    const json& d = descs[i];
    const std::string where = "checkpoint: tensors[" + std::to_string(i) + "].";
    if (!d.is_object()) throw FormatError(where + " is not an object");
    if (d.value("name", "") != name) throw FormatError(where + "name: expected " + name);
    if (d.value("dtype", "") != dtype_name(dtype_of<T>())) throw FormatError(where + "dtype mismatch");
    if (!d.contains("shape") || !d["shape"].is_array() ||
        d["shape"].get<Shape>() != t->shape()) {
      throw FormatError(where + "shape mismatch for " + name);
    }
    if (!d.contains("offset") || !d["offset"].is_number_unsigned() ||
        d["offset"].get<std::uint64_t>() != expected_offset) {
      throw FormatError(where + "offset mismatch for " + name);
    }
    const std::size_t n = t->size() * sizeof(T);
    if (expected_offset + n > blob_bytes) throw FormatError(where + "blob truncated for " + name);
    get_scalars<T>(bytes, h.blob_start + expected_offset, t->data());
    expected_offset += n;
  }
  if (expected_offset != blob_bytes) throw FormatError("checkpoint: trailing bytes after blobs");
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     AdliteNet<T>& model, const AdamState<T>* adam) {
  write_file(path, encode_checkpoint(config, model, adam));
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint<T>(bytes);
}

RunConfig peek_checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return header_config(parse_header(bytes).doc);
}

#define ADLITE_INSTANTIATE(T)                                                                     \
  template std::vector<std::uint8_t> encode_checkpoint<T>(const RunConfig&, AdliteNet<T>&,        \
                                                          const AdamState<T>*);                   \
  template LoadedCheckpoint<T> decode_checkpoint<T>(std::span<const std::uint8_t>);               \
  template void save_checkpoint<T>(const std::filesystem::path&, const RunConfig&,                \
                                   AdliteNet<T>&, const AdamState<T>*);                           \
  template LoadedCheckpoint<T> load_checkpoint<T>(const std::filesystem::path&);

ADLITE_INSTANTIATE(float)
ADLITE_INSTANTIATE(double)

#undef ADLITE_INSTANTIATE

}  // namespace adlite::cli
