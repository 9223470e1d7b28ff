#include <cmath>
#include <type_traits>

#include "adlite/layers.hpp"

namespace adlite {

namespace {

template <typename T>
using Accum = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

}  // namespace

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, std::size_t channels, double momentum, double eps)
    : gamma_(name + ".gamma", BasicTensor<T>({channels}, T{1})),
      beta_(name + ".beta", BasicTensor<T>({channels})),
      running_mean_({channels}),
      running_var_({channels}, T{1}),
      momentum_(momentum),
      eps_(eps) {
  if (!(momentum > 0.0 && momentum < 1.0) || !(eps > 0.0)) {
    throw ConfigError("batchnorm '" + name + "': momentum must lie in (0,1) and eps be positive");
  }
}

template <typename T>
std::pair<BasicTensor<T>, BatchNormCache<T>> BatchNorm<T>::forward(const BasicTensor<T>& x,
                                                                   Mode mode) {
  if (mode == Mode::infer) return {infer(x), BatchNormCache<T>{}};
  const std::size_t ch = channels();
  if (x.rank() != 4 || x.dim(1) != ch) {
    throw ShapeError(gamma_.name + ": expected " + std::to_string(ch) + " channels, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);
  const std::size_t count = n * plane;
  if (count < 2) {
    throw ShapeError(gamma_.name + ": train mode needs at least 2 values per channel, got " +
                     std::to_string(count));
  }

  BatchNormCache<T> cache{BasicTensor<T>(x.shape()), std::vector<T>(ch), true};
  BasicTensor<T> out(x.shape());
  using Acc = Accum<T>;
  for (std::size_t c = 0; c < ch; ++c) {
    Acc sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = x.data().data() + (i * ch + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) sum += src[p];
    }
    const Acc mean = sum / static_cast<Acc>(count);
    Acc sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = x.data().data() + (i * ch + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const Acc d = src[p] - mean;
        sq += d * d;
      }
    }
    const Acc var = sq / static_cast<Acc>(count);
    const T inv_std = static_cast<T>(Acc(1) / std::sqrt(var + static_cast<Acc>(eps_)));
    const T m = static_cast<T>(mean);
    const T g = gamma_.value[c], b = beta_.value[c];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * ch + c) * plane;
      const T* src = x.data().data() + base;
      T* xh = cache.normalized.data().data() + base;
      T* dst = out.data().data() + base;
      for (std::size_t p = 0; p < plane; ++p) {
        xh[p] = (src[p] - m) * inv_std;
        dst[p] = g * xh[p] + b;
      }
    }
    cache.inv_std[c] = inv_std;
    running_mean_[c] = static_cast<T>(momentum_ * running_mean_[c] + (1 - momentum_) * mean);
    running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1 - momentum_) * var);
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
BasicTensor<T> BatchNorm<T>::infer(const BasicTensor<T>& x) const {
  const std::size_t ch = channels();
  if (x.rank() != 4 || x.dim(1) != ch) {
    throw ShapeError(gamma_.name + ": expected " + std::to_string(ch) + " channels, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);
  BasicTensor<T> out(x.shape());
  using Acc = Accum<T>;
  for (std::size_t c = 0; c < ch; ++c) {
    const T inv_std = static_cast<T>(Acc(1) / std::sqrt(static_cast<Acc>(running_var_[c]) + static_cast<Acc>(eps_)));
    const T scale = gamma_.value[c] * inv_std;
    const T shift = beta_.value[c] - running_mean_[c] * scale;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * ch + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = x[base + p] * scale + shift;
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> BatchNorm<T>::backward(const BatchNormCache<T>& cache,
                                         const BasicTensor<T>& grad_out) const {
  if (!cache.valid) throw StateError(gamma_.name + ": backward without a train-mode cache");
  if (grad_out.shape() != cache.normalized.shape()) {
    throw ShapeError(gamma_.name + ": grad_out shape mismatch " + shape_str(grad_out.shape()));
  }
  const std::size_t ch = channels();
  const std::size_t n = grad_out.dim(0), plane = grad_out.dim(2) * grad_out.dim(3);
  const T count = static_cast<T>(n * plane);

  BatchNormGrads<T> g{BasicTensor<T>(grad_out.shape()), BasicTensor<T>({ch}), BasicTensor<T>({ch})};
  for (std::size_t c = 0; c < ch; ++c) {
    T sum_dy = 0, sum_dy_xh = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * ch + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += grad_out[base + p];
        sum_dy_xh += grad_out[base + p] * cache.normalized[base + p];
      }
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xh;
    const T scale = gamma_.value[c] * cache.inv_std[c] / count;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * ch + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        g.input[base + p] =
            scale * (count * grad_out[base + p] - sum_dy - cache.normalized[base + p] * sum_dy_xh);
      }
    }
  }
  return g;
}

template class BatchNorm<float>;
template class BatchNorm<double>;
template class BatchNorm<long double>;

}  // namespace adlite
