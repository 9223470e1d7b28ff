#include "adlite/tensor.hpp"

#include <sstream>

namespace adlite {

std::string_view dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw ConfigError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t flatten_index(const Shape& shape, std::span<const std::size_t> index) {
  if (index.size() != shape.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " does not match shape " +
                     shape_str(shape));
  }
  std::size_t off = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (index[i] >= shape[i]) throw ShapeError("index out of bounds for shape " + shape_str(shape));
    off = off * shape[i] + index[i];
  }
  return off;
}

std::vector<std::size_t> unflatten_index(const Shape& shape, std::size_t offset) {
  if (offset >= shape_numel(shape)) {
    throw ShapeError("offset out of bounds for shape " + shape_str(shape));
  }
  std::vector<std::size_t> index(shape.size());
  for (std::size_t i = shape.size(); i-- > 0;) {
    index[i] = offset % shape[i];
    offset /= shape[i];
  }
  return index;
}

template <typename T>
void require_finite(const BasicTensor<T>& t, std::string_view what) {
  if (!t.all_finite()) throw NumericError("non-finite value in " + std::string(what));
}

template <typename T>
BasicTensor<T> map_elementwise(const BasicTensor<T>& t, const std::function<T(T)>& f) {
  BasicTensor<T> out(t.shape());
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = f(src[i]);
    if (!std::isfinite(dst[i])) {
      throw NumericError("map_elementwise produced a non-finite value at offset " +
                         std::to_string(i));
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  BasicTensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  T* dst = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    dst = std::copy_n(a.data().data() + i * ca * plane, ca * plane, dst);
    dst = std::copy_n(b.data().data() + i * cb * plane, cb * plane, dst);
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t begin, std::size_t end) {
  if (t.rank() != 4 || begin > end || end > t.dim(1)) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_str(t.shape()));
  }
  const std::size_t n = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
  const std::size_t width = end - begin;
  BasicTensor<T> out({n, width, t.dim(2), t.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(t.data().data() + (i * c + begin) * plane, width * plane,
                out.data().data() + i * width * plane);
  }
  return out;
}

template <typename T>
BasicTensor<T> reduce_mean_spatial(const BasicTensor<T>& t) {
  if (t.rank() != 4) throw ShapeError("reduce_mean_spatial expects rank 4, got " + shape_str(t.shape()));
  const std::size_t plane = t.dim(2) * t.dim(3);
  if (plane == 0) throw ShapeError("reduce_mean_spatial over an empty spatial plane");
  const std::size_t rows = t.dim(0) * t.dim(1);
  BasicTensor<T> out({t.dim(0), t.dim(1)});
  const T* src = t.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[r * plane + i];
    out[r] = acc / static_cast<T>(plane);
  }
  return out;
}

template <typename T>
BasicTensor<T> he_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("he_init requires fan_in > 0");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  BasicTensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(rng.normal(0.0, stddev));
  return out;
}

#define ADLITE_INSTANTIATE(T)                                                              \
  template void require_finite<T>(const BasicTensor<T>&, std::string_view);                \
  template BasicTensor<T> map_elementwise<T>(const BasicTensor<T>&, const std::function<T(T)>&); \
  template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> slice_channels<T>(const BasicTensor<T>&, std::size_t, std::size_t); \
  template BasicTensor<T> reduce_mean_spatial<T>(const BasicTensor<T>&);                    \
  template BasicTensor<T> he_init<T>(const Shape&, std::size_t, Rng&);

ADLITE_INSTANTIATE(float)
ADLITE_INSTANTIATE(double)
ADLITE_INSTANTIATE(long double)

#undef ADLITE_INSTANTIATE

}  // namespace adlite
