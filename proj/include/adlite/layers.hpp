#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adlite/tensor.hpp"

namespace adlite {

enum class Activation { none, relu };
enum class Mode { train, infer };

/// A trainable tensor and its gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

/// Non-trainable state that must survive a checkpoint (BN running stats).
template <typename T>
struct Buffer {
  std::string name;
  BasicTensor<T>* tensor;
};

// ---------------------------------------------------------------------------
// Standard convolution, stride 1, "same" zero padding, odd square kernel.
// Cross-correlation (no kernel flip).

template <typename T>
struct ConvCache {
  BasicTensor<T> input;
  BasicTensor<T> output;  // post-activation; its sign gives the ReLU mask
  Activation activation = Activation::none;
  bool valid = false;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
class Conv2D {
 public:
  Conv2D() = default;
  /// He-normal weights, zero bias.
  Conv2D(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         Rng& rng);
  Conv2D(std::string name, BasicTensor<T> weights, BasicTensor<T> bias);

  std::pair<BasicTensor<T>, ConvCache<T>> forward(const BasicTensor<T>& x, Activation act) const;
  ConvGrads<T> backward(const ConvCache<T>& cache, const BasicTensor<T>& grad_out) const;

  std::size_t in_channels() const { return weights_.value.dim(1); }
  std::size_t out_channels() const { return weights_.value.dim(0); }
  std::size_t kernel() const { return weights_.value.dim(2); }
  std::size_t param_count() const { return weights_.value.size() + bias_.value.size(); }

  Parameter<T>& weights() { return weights_; }
  Parameter<T>& bias() { return bias_; }
  const Parameter<T>& weights() const { return weights_; }
  const Parameter<T>& bias() const { return bias_; }

 private:
  Parameter<T> weights_;
  Parameter<T> bias_;
};

// ---------------------------------------------------------------------------
// Depthwise-separable convolution: per-channel 3x3 depthwise (same padding,
// no activation), then 1x1 pointwise channel mixing, then ReLU.

template <typename T>
struct DwscCache {
  BasicTensor<T> input;
  BasicTensor<T> depthwise_out;
  BasicTensor<T> output;
  bool valid = false;
};

template <typename T>
struct DwscGrads {
  BasicTensor<T> input;
  BasicTensor<T> depthwise_weights;
  BasicTensor<T> depthwise_bias;
  BasicTensor<T> pointwise_weights;
  BasicTensor<T> pointwise_bias;
};

template <typename T>
class DepthwiseSeparable {
 public:
  DepthwiseSeparable() = default;
  DepthwiseSeparable(std::string name, std::size_t channels, std::size_t out_channels, Rng& rng);
  DepthwiseSeparable(std::string name, BasicTensor<T> dw_weights, BasicTensor<T> dw_bias,
                     BasicTensor<T> pw_weights, BasicTensor<T> pw_bias);

  std::pair<BasicTensor<T>, DwscCache<T>> forward(const BasicTensor<T>& x) const;
  DwscGrads<T> backward(const DwscCache<T>& cache, const BasicTensor<T>& grad_out) const;

  std::size_t in_channels() const { return dw_weights_.value.dim(0); }
  std::size_t out_channels() const { return pw_weights_.value.dim(0); }
  std::size_t param_count() const {
    return dw_weights_.value.size() + dw_bias_.value.size() + pw_weights_.value.size() +
           pw_bias_.value.size();
  }

  Parameter<T>& depthwise_weights() { return dw_weights_; }
  Parameter<T>& depthwise_bias() { return dw_bias_; }
  Parameter<T>& pointwise_weights() { return pw_weights_; }
  Parameter<T>& pointwise_bias() { return pw_bias_; }

 private:
  Parameter<T> dw_weights_;  // (C, 1, 3, 3)
  Parameter<T> dw_bias_;     // (C)
  Parameter<T> pw_weights_;  // (outC, C, 1, 1)
  Parameter<T> pw_bias_;     // (outC)
};

// ---------------------------------------------------------------------------
// Per-channel batch normalization over (N, H, W).

template <typename T>
struct BatchNormCache {
  BasicTensor<T> normalized;  // x-hat
  std::vector<T> inv_std;
  bool valid = false;
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t channels, double momentum = 0.9, double eps = 1e-5);

  /// Train mode normalizes with batch statistics and updates the running
  /// estimates: running = momentum * running + (1 - momentum) * batch.
  std::pair<BasicTensor<T>, BatchNormCache<T>> forward(const BasicTensor<T>& x, Mode mode);
  /// Infer-mode forward; never touches state.
  BasicTensor<T> infer(const BasicTensor<T>& x) const;
  BatchNormGrads<T> backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out) const;

  std::size_t channels() const { return gamma_.value.size(); }
  std::size_t param_count() const { return gamma_.value.size() + beta_.value.size(); }
  double momentum() const { return momentum_; }
  double eps() const { return eps_; }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  BasicTensor<T>& running_mean() { return running_mean_; }
  BasicTensor<T>& running_var() { return running_var_; }
  const BasicTensor<T>& running_mean() const { return running_mean_; }
  const BasicTensor<T>& running_var() const { return running_var_; }

 private:
  Parameter<T> gamma_;
  Parameter<T> beta_;
  BasicTensor<T> running_mean_;
  BasicTensor<T> running_var_;
  double momentum_ = 0.9;
  double eps_ = 1e-5;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, floor semantics. Ties go to the first maximum
// in row-major scan order.

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input offset per output element
  bool valid = false;
};

template <typename T>
std::pair<BasicTensor<T>, MaxPoolCache> maxpool_forward(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> maxpool_backward(const MaxPoolCache& cache, const BasicTensor<T>& grad_out);

// ---------------------------------------------------------------------------
// Negative-image transform out = m * (c - x). Parameterless.

struct TxLayer {
  double m = 0.8;
  double c = 255.0;

  template <typename T>
  BasicTensor<T> forward(const BasicTensor<T>& x) const {
    BasicTensor<T> out(x.shape());
    const T mm = static_cast<T>(m), cc = static_cast<T>(c);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = mm * (cc - x[i]);
    return out;
  }

  template <typename T>
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) const {
    BasicTensor<T> g(grad_out.shape());
    const T mm = static_cast<T>(m);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = -mm * grad_out[i];
    return g;
  }
};

// ---------------------------------------------------------------------------
// Fully connected output layer, out = x W^T + b.

template <typename T>
struct DenseCache {
  BasicTensor<T> input;
  bool valid = false;
};

template <typename T>
struct DenseGrads {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, std::size_t in_dim, std::size_t out_dim, Rng& rng);
  Dense(std::string name, BasicTensor<T> weights, BasicTensor<T> bias);

  std::pair<BasicTensor<T>, DenseCache<T>> forward(const BasicTensor<T>& x) const;
  DenseGrads<T> backward(const DenseCache<T>& cache, const BasicTensor<T>& grad_out) const;

  std::size_t in_dim() const { return weights_.value.dim(1); }
  std::size_t out_dim() const { return weights_.value.dim(0); }
  std::size_t param_count() const { return weights_.value.size() + bias_.value.size(); }

  Parameter<T>& weights() { return weights_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Parameter<T> weights_;
  Parameter<T> bias_;
};

// ---------------------------------------------------------------------------
// Softmax + (optionally class-weighted) categorical cross-entropy.

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> probs;
  BasicTensor<T> grad_logits;
};

/// loss = mean_n(-w[y_n] * log p[n, y_n]); grad = w[y] * (p - onehot) / N.
/// Empty `class_weights` means unweighted.
template <typename T>
LossResult<T> softmax_cce(const BasicTensor<T>& logits, std::span<const std::uint32_t> targets,
                          std::span<const double> class_weights = {});

/// Row-wise softmax with max subtraction.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// n_total / (K * n_k), rescaled to mean 1.
std::vector<double> inverse_frequency_weights(std::span<const std::size_t> class_counts);

}  // namespace adlite
