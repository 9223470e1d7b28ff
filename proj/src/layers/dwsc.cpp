#include <vector>

#include "adlite/layers.hpp"
#include "im2col.hpp"

namespace adlite {

using detail::ConstMatMap;
using detail::MatMap;

namespace {

constexpr std::size_t kDepthwiseKernel = 3;

// Visits every (kernel tap, valid output row span) of a same-padded 3x3
// stride-1 convolution on an h x w plane. fn(ky, kx, y, x0, x1, dy, dx).
template <typename Fn>
void for_each_tap(std::size_t height, std::size_t width, Fn&& fn) {
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(height);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(width);
  for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
    for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
      const std::ptrdiff_t dy = ky - 1, dx = kx - 1;
      const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
      const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(w, w - dx);
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        const std::ptrdiff_t iy = y + dy;
        if (iy < 0 || iy >= h || x0 >= x1) continue;
        fn(ky, kx, y, iy, x0, x1, dx);
      }
    }
  }
}

}  // namespace

template <typename T>
DepthwiseSeparable<T>::DepthwiseSeparable(std::string name, std::size_t channels,
                                          std::size_t out_channels, Rng& rng) {
  if (channels == 0 || out_channels == 0) throw ConfigError("dwsc '" + name + "': zero channels");
  dw_weights_ = Parameter<T>(name + ".depthwise.weight",
                             he_init<T>({channels, 1, 3, 3}, kDepthwiseKernel * kDepthwiseKernel, rng));
  dw_bias_ = Parameter<T>(name + ".depthwise.bias", BasicTensor<T>({channels}));
  pw_weights_ = Parameter<T>(name + ".pointwise.weight",
                             he_init<T>({out_channels, channels, 1, 1}, channels, rng));
  pw_bias_ = Parameter<T>(name + ".pointwise.bias", BasicTensor<T>({out_channels}));
}

template <typename T>
DepthwiseSeparable<T>::DepthwiseSeparable(std::string name, BasicTensor<T> dw_weights,
                                          BasicTensor<T> dw_bias, BasicTensor<T> pw_weights,
                                          BasicTensor<T> pw_bias) {
  const bool ok = dw_weights.rank() == 4 && dw_weights.dim(1) == 1 && dw_weights.dim(2) == 3 &&
                  dw_weights.dim(3) == 3 && dw_bias.shape() == Shape{dw_weights.dim(0)} &&
                  pw_weights.rank() == 4 && pw_weights.dim(1) == dw_weights.dim(0) &&
                  pw_weights.dim(2) == 1 && pw_weights.dim(3) == 1 &&
                  pw_bias.shape() == Shape{pw_weights.dim(0)};
  if (!ok) throw ShapeError("dwsc '" + name + "': inconsistent parameter shapes");
  dw_weights_ = Parameter<T>(name + ".depthwise.weight", std::move(dw_weights));
  dw_bias_ = Parameter<T>(name + ".depthwise.bias", std::move(dw_bias));
  pw_weights_ = Parameter<T>(name + ".pointwise.weight", std::move(pw_weights));
  pw_bias_ = Parameter<T>(name + ".pointwise.bias", std::move(pw_bias));
}

template <typename T>
std::pair<BasicTensor<T>, DwscCache<T>> DepthwiseSeparable<T>::forward(
    const BasicTensor<T>& x) const {
  const std::size_t cin = in_channels(), cout = out_channels();
  if (x.rank() != 4 || x.dim(1) != cin) {
    throw ShapeError(dw_weights_.name + ": expected input with " + std::to_string(cin) +
                     " channels, got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;

  BasicTensor<T> mid(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cin; ++c) {
      const T* src = x.data().data() + (i * cin + c) * plane;
      T* dst = mid.data().data() + (i * cin + c) * plane;
      const T* kw = dw_weights_.value.data().data() + c * 9;
      std::fill(dst, dst + plane, dw_bias_.value[c]);
      for_each_tap(h, w, [&](auto ky, auto kx, auto y, auto iy, auto x0, auto x1, auto dx) {
        const T wt = kw[ky * 3 + kx];
        T* row = dst + y * static_cast<std::ptrdiff_t>(w);
        const T* in = src + iy * static_cast<std::ptrdiff_t>(w) + dx;
        for (auto xx = x0; xx < x1; ++xx) row[xx] += wt * in[xx];
      });
    }
  }

  BasicTensor<T> out({n, cout, h, w});
  ConstMatMap<T> pw(pw_weights_.value.data().data(), cout, cin);
  for (std::size_t i = 0; i < n; ++i) {
    MatMap<T> o(out.data().data() + i * cout * plane, cout, plane);
    o.noalias() = pw * ConstMatMap<T>(mid.data().data() + i * cin * plane, cin, plane);
    for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += pw_bias_.value[c];
  }
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};

  DwscCache<T> cache{x, std::move(mid), out, true};
  return {std::move(out), std::move(cache)};
}

template <typename T>
DwscGrads<T> DepthwiseSeparable<T>::backward(const DwscCache<T>& cache,
                                             const BasicTensor<T>& grad_out) const {
  if (!cache.valid) throw StateError(dw_weights_.name + ": backward without a forward cache");
  if (grad_out.shape() != cache.output.shape()) {
    throw ShapeError(dw_weights_.name + ": grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match output " + shape_str(cache.output.shape()));
  }
  const BasicTensor<T>& x = cache.input;
  const std::size_t cin = in_channels(), cout = out_channels();
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), plane = h * w;

  BasicTensor<T> grad_pre = grad_out;
  for (std::size_t i = 0; i < grad_pre.size(); ++i) {
    if (!(cache.output[i] > T{0})) grad_pre[i] = T{0};
  }

  DwscGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(dw_weights_.value.shape()),
                 BasicTensor<T>(dw_bias_.value.shape()), BasicTensor<T>(pw_weights_.value.shape()),
                 BasicTensor<T>(pw_bias_.value.shape())};
  BasicTensor<T> grad_mid(x.shape());
  ConstMatMap<T> pw(pw_weights_.value.data().data(), cout, cin);
  MatMap<T> gpw(g.pointwise_weights.data().data(), cout, cin);
  for (std::size_t i = 0; i < n; ++i) {
    ConstMatMap<T> go(grad_pre.data().data() + i * cout * plane, cout, plane);
    ConstMatMap<T> mid(cache.depthwise_out.data().data() + i * cin * plane, cin, plane);
    for (std::size_t c = 0; c < cout; ++c) {
      const T* row = grad_pre.data().data() + (i * cout + c) * plane;
      T acc{0};
      for (std::size_t p = 0; p < plane; ++p) acc += row[p];
      g.pointwise_bias[c] += acc;
    }
    gpw.noalias() += go * mid.transpose();
    MatMap<T>(grad_mid.data().data() + i * cin * plane, cin, plane).noalias() = pw.transpose() * go;
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cin; ++c) {
      const T* src = x.data().data() + (i * cin + c) * plane;
      const T* gm = grad_mid.data().data() + (i * cin + c) * plane;
      T* gx = g.input.data().data() + (i * cin + c) * plane;
      const T* kw = dw_weights_.value.data().data() + c * 9;
      T* gkw = g.depthwise_weights.data().data() + c * 9;
      T bsum = 0;
      for (std::size_t p = 0; p < plane; ++p) bsum += gm[p];
      g.depthwise_bias[c] += bsum;
      for_each_tap(h, w, [&](auto ky, auto kx, auto y, auto iy, auto x0, auto x1, auto dx) {
        const T wt = kw[ky * 3 + kx];
        const T* grow = gm + y * static_cast<std::ptrdiff_t>(w);
        const T* in = src + iy * static_cast<std::ptrdiff_t>(w) + dx;
        T* gin = gx + iy * static_cast<std::ptrdiff_t>(w) + dx;
        T acc = 0;
        for (auto xx = x0; xx < x1; ++xx) {
          acc += grow[xx] * in[xx];
          gin[xx] += wt * grow[xx];
        }
        gkw[ky * 3 + kx] += acc;
      });
    }
  }
  return g;
}

template class DepthwiseSeparable<float>;
template class DepthwiseSeparable<double>;
template class DepthwiseSeparable<long double>;

}  // namespace adlite
