#pragma once

#include <algorithm>
#include <cstddef>

#include <Eigen/Core>

namespace adlite::detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Unfolds one (C, H, W) image into a (C*k*k, H*W) matrix for a stride-1,
// same-padded k x k kernel. Row order matches (inC, kH, kW) weight layout.
template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, T* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = img + c * plane;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* dst = cols + ((c * k + ky) * k + kx) * plane;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          T* row = dst + y * w;
          const std::ptrdiff_t iy = y + dy;
          if (iy < 0 || iy >= h || x0 >= x1) {
            std::fill(row, row + w, T{0});
            continue;
          }
          std::fill(row, row + x0, T{0});
          std::copy(src + iy * w + x0 + dx, src + iy * w + x1 + dx, row + x0);
          std::fill(row + x1, row + w, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds a (C*k*k, H*W) matrix back into an image.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, T* img) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
  const std::size_t plane = height * width;
  std::fill(img, img + channels * plane, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = img + c * plane;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* src = cols + ((c * k + ky) * k + kx) * plane;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t iy = y + dy;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + y * w;
          T* out = dst + iy * w + dx;
          for (std::ptrdiff_t x = x0; x < x1; ++x) out[x] += row[x];
        }
      }
    }
  }
}

}  // namespace adlite::detail
