#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adlite/errors.hpp"
#include "adlite/rng.hpp"

namespace adlite {

using Shape = std::vector<std::size_t>;

enum class DType { f32, f64 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

std::string_view dtype_name(DType d);
DType parse_dtype(std::string_view name);
std::size_t dtype_size(DType d);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Row-major offset of a multi-index. Throws ShapeError on rank or bound
/// violations.
std::size_t flatten_index(const Shape& shape, std::span<const std::size_t> index);
std::vector<std::size_t> unflatten_index(const Shape& shape, std::size_t offset);

/// Allocator handing out 64-byte aligned blocks. Eigen's vectorized
/// reductions peel elements up to the first aligned address, so uniform
/// alignment keeps every summation order a function of shapes alone.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }

  template <typename U>
  bool operator==(const AlignedAllocator<U, Align>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major array. Activations use (N, C, H, W); conv weights use
/// (outC, inC, kH, kW).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  BasicTensor(Shape shape, const std::vector<T>& data)
      : BasicTensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}
  BasicTensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty() && shape_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Throws NumericError naming `what` if any element is NaN or infinite.
template <typename T>
void require_finite(const BasicTensor<T>& t, std::string_view what);

template <typename T>
BasicTensor<T> map_elementwise(const BasicTensor<T>& t, const std::function<T(T)>& f);

/// (N, Ca, H, W) ++ (N, Cb, H, W) -> (N, Ca + Cb, H, W).
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Channels [begin, end) of a rank-4 tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t begin, std::size_t end);

/// (N, C, H, W) -> (N, C), mean over each spatial plane.
template <typename T>
BasicTensor<T> reduce_mean_spatial(const BasicTensor<T>& t);

/// I.i.d. normal(0, sqrt(2 / fan_in)) samples.
template <typename T>
BasicTensor<T> he_init(const Shape& shape, std::size_t fan_in, Rng& rng);

}  // namespace adlite
