#include <vector>

#include "adlite/layers.hpp"
#include "im2col.hpp"

namespace adlite {

using detail::ConstMatMap;
using detail::MatMap;

template <typename T>
Conv2D<T>::Conv2D(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, Rng& rng) {
  if (kernel % 2 == 0 || in_channels == 0 || out_channels == 0) {
    throw ConfigError("conv '" + name + "': kernel must be odd and channels positive");
  }
  weights_ = Parameter<T>(name + ".weight",
                          he_init<T>({out_channels, in_channels, kernel, kernel},
                                     in_channels * kernel * kernel, rng));
  bias_ = Parameter<T>(name + ".bias", BasicTensor<T>({out_channels}));
}

template <typename T>
Conv2D<T>::Conv2D(std::string name, BasicTensor<T> weights, BasicTensor<T> bias) {
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3) || weights.dim(2) % 2 == 0 ||
      bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ShapeError("conv '" + name + "': bad weight/bias shapes " + shape_str(weights.shape()) +
                     ", " + shape_str(bias.shape()));
  }
  weights_ = Parameter<T>(name + ".weight", std::move(weights));
  bias_ = Parameter<T>(name + ".bias", std::move(bias));
}

template <typename T>
std::pair<BasicTensor<T>, ConvCache<T>> Conv2D<T>::forward(const BasicTensor<T>& x,
                                                           Activation act) const {
  if (x.rank() != 4 || x.dim(1) != in_channels()) {
    throw ShapeError(weights_.name + ": expected input with " + std::to_string(in_channels()) +
                     " channels, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;
  const std::size_t k = kernel(), cin = in_channels(), cout = out_channels();
  const std::size_t rows = cin * k * k;

  BasicTensor<T> out({n, cout, h, w});
  AlignedVector<T> cols(rows * plane);
  ConstMatMap<T> wmat(weights_.value.data().data(), cout, rows);
  for (std::size_t i = 0; i < n; ++i) {
    const T* img = x.data().data() + i * cin * plane;
    detail::im2col(img, cin, h, w, k, cols.data());
    MatMap<T> o(out.data().data() + i * cout * plane, cout, plane);
    o.noalias() = wmat * ConstMatMap<T>(cols.data(), rows, plane);
    for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += bias_.value[c];
  }
  if (act == Activation::relu) {
    for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  }
  ConvCache<T> cache{x, out, act, true};
  return {std::move(out), std::move(cache)};
}

template <typename T>
ConvGrads<T> Conv2D<T>::backward(const ConvCache<T>& cache, const BasicTensor<T>& grad_out) const {
  if (!cache.valid) throw StateError(weights_.name + ": backward without a forward cache");
  if (grad_out.shape() != cache.output.shape()) {
    throw ShapeError(weights_.name + ": grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match output " + shape_str(cache.output.shape()));
  }
  const BasicTensor<T>& x = cache.input;
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;
  const std::size_t k = kernel(), cin = in_channels(), cout = out_channels();
  const std::size_t rows = cin * k * k;

  BasicTensor<T> grad_pre = grad_out;
  if (cache.activation == Activation::relu) {
    for (std::size_t i = 0; i < grad_pre.size(); ++i) {
      if (!(cache.output[i] > T{0})) grad_pre[i] = T{0};
    }
  }

  ConvGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(weights_.value.shape()),
                 BasicTensor<T>(bias_.value.shape())};
  AlignedVector<T> cols(rows * plane);
  AlignedVector<T> grad_cols(rows * plane);
  ConstMatMap<T> wmat(weights_.value.data().data(), cout, rows);
  MatMap<T> gw(g.weights.data().data(), cout, rows);
  for (std::size_t i = 0; i < n; ++i) {
    ConstMatMap<T> go(grad_pre.data().data() + i * cout * plane, cout, plane);
    // plain loops: Eigen reductions vectorize by address alignment, which
    // would make the summation order allocation-dependent
    for (std::size_t c = 0; c < cout; ++c) {
      const T* row = grad_pre.data().data() + (i * cout + c) * plane;
      T acc{0};
      for (std::size_t p = 0; p < plane; ++p) acc += row[p];
      g.bias[c] += acc;
    }
    detail::im2col(x.data().data() + i * cin * plane, cin, h, w, k, cols.data());
    gw.noalias() += go * ConstMatMap<T>(cols.data(), rows, plane).transpose();
    MatMap<T>(grad_cols.data(), rows, plane).noalias() = wmat.transpose() * go;
    detail::col2im(grad_cols.data(), cin, h, w, k, g.input.data().data() + i * cin * plane);
  }
  return g;
}

template class Conv2D<float>;
template class Conv2D<double>;
template class Conv2D<long double>;

}  // namespace adlite
