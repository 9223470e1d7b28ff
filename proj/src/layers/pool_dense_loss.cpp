#include <cmath>
#include <numeric>

#include "adlite/layers.hpp"
#include "im2col.hpp"

namespace adlite {

using detail::ConstMatMap;
using detail::MatMap;

template <typename T>
std::pair<BasicTensor<T>, MaxPoolCache> maxpool_forward(const BasicTensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw ShapeError("maxpool needs a rank-4 input with H, W >= 2, got " + shape_str(x.shape()));
  }
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  BasicTensor<T> out({x.dim(0), x.dim(1), oh, ow});
  MaxPoolCache cache{x.shape(), std::vector<std::size_t>(out.size()), true};
  for (std::size_t p = 0; p < nc; ++p) {
    const std::size_t in_base = p * h * w;
    const std::size_t out_base = p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        // row-major scan, strict '>' keeps the first maximum
        std::size_t best = in_base + (2 * i) * w + 2 * j;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t k : cand) {
          if (x[k] > x[best]) best = k;
        }
        out[out_base + i * ow + j] = x[best];
        cache.argmax[out_base + i * ow + j] = best;
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
BasicTensor<T> maxpool_backward(const MaxPoolCache& cache, const BasicTensor<T>& grad_out) {
  if (!cache.valid) throw StateError("maxpool backward without a forward cache");
  if (grad_out.size() != cache.argmax.size()) {
    throw ShapeError("maxpool backward: grad_out shape " + shape_str(grad_out.shape()));
  }
  BasicTensor<T> g(cache.input_shape);
  for (std::size_t i = 0; i < cache.argmax.size(); ++i) g[cache.argmax[i]] += grad_out[i];
  return g;
}

template <typename T>
Dense<T>::Dense(std::string name, std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weights_(name + ".weight", he_init<T>({out_dim, in_dim}, in_dim, rng)),
      bias_(name + ".bias", BasicTensor<T>({out_dim})) {}

template <typename T>
Dense<T>::Dense(std::string name, BasicTensor<T> weights, BasicTensor<T> bias) {
  if (weights.rank() != 2 || bias.shape() != Shape{weights.dim(0)}) {
    throw ShapeError("dense '" + name + "': bad weight/bias shapes");
  }
  weights_ = Parameter<T>(name + ".weight", std::move(weights));
  bias_ = Parameter<T>(name + ".bias", std::move(bias));
}

template <typename T>
std::pair<BasicTensor<T>, DenseCache<T>> Dense<T>::forward(const BasicTensor<T>& x) const {
  if (x.rank() != 2 || x.dim(1) != in_dim()) {
    throw ShapeError(weights_.name + ": expected (N, " + std::to_string(in_dim()) + "), got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  BasicTensor<T> out({n, out_dim()});
  MatMap<T> o(out.data().data(), n, out_dim());
  o.noalias() = ConstMatMap<T>(x.data().data(), n, in_dim()) *
                ConstMatMap<T>(weights_.value.data().data(), out_dim(), in_dim()).transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out_dim(); ++j) o(i, j) += bias_.value[j];
  }
  return {std::move(out), DenseCache<T>{x, true}};
}

template <typename T>
DenseGrads<T> Dense<T>::backward(const DenseCache<T>& cache, const BasicTensor<T>& grad_out) const {
  if (!cache.valid) throw StateError(weights_.name + ": backward without a forward cache");
  const std::size_t n = cache.input.dim(0);
  if (grad_out.shape() != Shape{n, out_dim()}) {
    throw ShapeError(weights_.name + ": grad_out shape " + shape_str(grad_out.shape()));
  }
  DenseGrads<T> g{BasicTensor<T>(cache.input.shape()), BasicTensor<T>(weights_.value.shape()),
                  BasicTensor<T>(bias_.value.shape())};
  ConstMatMap<T> go(grad_out.data().data(), n, out_dim());
  ConstMatMap<T> x(cache.input.data().data(), n, in_dim());
  MatMap<T>(g.weights.data().data(), out_dim(), in_dim()).noalias() = go.transpose() * x;
  MatMap<T>(g.input.data().data(), n, in_dim()).noalias() =
      go * ConstMatMap<T>(weights_.value.data().data(), out_dim(), in_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out_dim(); ++j) g.bias[j] += go(i, j);
  }
  return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects (N, K), got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BasicTensor<T> probs(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    T* p = probs.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(row[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
  }
  return probs;
}

template <typename T>
LossResult<T> softmax_cce(const BasicTensor<T>& logits, std::span<const std::uint32_t> targets,
                          std::span<const double> class_weights) {
  if (logits.rank() != 2 || logits.dim(1) < 2) {
    throw ShapeError("softmax_cce expects (N, K>=2) logits, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (targets.size() != n) {
    throw ShapeError("softmax_cce: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " rows");
  }
  if (!class_weights.empty()) {
    if (class_weights.size() != k) throw ConfigError("softmax_cce: class weight count != K");
    for (double w : class_weights) {
      if (!(w > 0.0)) throw ConfigError("softmax_cce: class weights must be positive");
    }
  }
  LossResult<T> r{0.0, softmax(logits), BasicTensor<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t y = targets[i];
    if (y >= k) {
      throw LabelError("target " + std::to_string(y) + " out of range for " + std::to_string(k) +
                       " classes");
    }
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    const T* row = logits.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double log_p = static_cast<double>(row[y] - mx) - std::log(sum);
    total += -w * log_p;
    const T scale = static_cast<T>(w / static_cast<double>(n));
    for (std::size_t j = 0; j < k; ++j) {
      const T onehot = j == y ? T{1} : T{0};
      r.grad_logits[i * k + j] = scale * (r.probs[i * k + j] - onehot);
    }
  }
  r.loss = total / static_cast<double>(n);
  if (!std::isfinite(r.loss)) throw NumericError("softmax_cce produced a non-finite loss");
  return r;
}

std::vector<double> inverse_frequency_weights(std::span<const std::size_t> class_counts) {
  const std::size_t k = class_counts.size();
  const double total = std::accumulate(class_counts.begin(), class_counts.end(), 0.0);
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (class_counts[i] == 0) throw ConfigError("class weight requested for an empty class");
    w[i] = total / (static_cast<double>(k) * static_cast<double>(class_counts[i]));
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(k);
  for (auto& v : w) v /= mean;
  return w;
}

#define ADLITE_INSTANTIATE(T)                                                                  \
  template std::pair<BasicTensor<T>, MaxPoolCache> maxpool_forward<T>(const BasicTensor<T>&);  \
  template BasicTensor<T> maxpool_backward<T>(const MaxPoolCache&, const BasicTensor<T>&);     \
  template class Dense<T>;                                                                     \
  template BasicTensor<T> softmax<T>(const BasicTensor<T>&);                                   \
  template LossResult<T> softmax_cce<T>(const BasicTensor<T>&, std::span<const std::uint32_t>, \
                                        std::span<const double>);

ADLITE_INSTANTIATE(float)
ADLITE_INSTANTIATE(double)
ADLITE_INSTANTIATE(long double)

#undef ADLITE_INSTANTIATE

}  // namespace adlite
