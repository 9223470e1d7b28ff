#include "adlite/model.hpp"

#include <algorithm>

namespace adlite {

std::size_t AdliteConfig::pcb_channels() const {
  if (!pcb_enabled) return 0;
  if (pcb_filters.empty()) return base_filters.at(pcb_tap_block - 1);
  return pcb_filters.back();
}

void AdliteConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (input_channels != 1 && input_channels != 3) fail("input_channels must be 1 or 3");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (base_filters.empty()) fail("base_filters must not be empty");
  if (base_filters.size() >= 63) fail("too many base blocks");
  for (auto f : base_filters) {
    if (f == 0) fail("base_filters entries must be positive");
  }
  if (first_kernel % 2 == 0 || other_kernels % 2 == 0) fail("kernel sizes must be odd");
  const std::size_t divisor = std::size_t{1} << pool_count();
  if (input_size == 0 || input_size % divisor != 0) {
    fail("input_size " + std::to_string(input_size) + " is not divisible by 2^" +
         std::to_string(pool_count()) + " = " + std::to_string(divisor));
  }
  if (pcb_enabled) {
    if (pcb_tap_block < 1 || pcb_tap_block > base_filters.size()) {
      fail("pcb_tap_block must lie in [1, " + std::to_string(base_filters.size()) + "]");
    }
    const std::size_t remaining = base_filters.size() - pcb_tap_block;
    if (pcb_filters.size() != remaining) {
      fail("pcb has " + std::to_string(pcb_filters.size()) + " pooled blocks but the base path has " +
           std::to_string(remaining) + " after the tap; spatial extents would differ at the concat");
    }
    for (auto f : pcb_filters) {
      if (f == 0) fail("pcb_filters entries must be positive");
    }
    if (!(tx_m > 0.0 && tx_m < 1.0)) fail("tx_m must lie in (0, 1)");
  }
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) fail("bn_momentum must lie in (0, 1)");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
}

template <typename T>
const BasicTensor<T>& Trace<T>::output(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end() || outputs.empty()) throw StateError("trace has no tensor for node " + name);
  return outputs.at(static_cast<std::size_t>(it - names.begin()));
}

template <typename T>
BasicTensor<T> gap_backward(const BasicTensor<T>& grad_out, const Shape& input_shape) {
  const std::size_t plane = input_shape[2] * input_shape[3];
  BasicTensor<T> g(input_shape);
  const T scale = T{1} / static_cast<T>(plane);
  for (std::size_t r = 0; r < grad_out.size(); ++r) {
    const T v = grad_out[r] * scale;
    std::fill_n(g.data().data() + r * plane, plane, v);
  }
  return g;
}

namespace {

std::string block_name(const char* prefix, std::size_t i) {
  return std::string(prefix) + std::to_string(i + 1);
}

}  // namespace

template <typename T>
AdliteNet<T>::AdliteNet(const AdliteConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = cfg_.input_channels;
  for (std::size_t i = 0; i < cfg_.base_filters.size(); ++i) {
    const std::string name = block_name("block", i);
    const std::size_t k = i == 0 ? cfg_.first_kernel : cfg_.other_kernels;
    const std::size_t out = cfg_.base_filters[i];
    base_.push_back({Conv2D<T>(name + ".conv", in, out, k, rng),
                     BatchNorm<T>(name + ".bn", out, cfg_.bn_momentum, cfg_.bn_eps)});
    in = out;
  }
  for (std::size_t i = 0; i < cfg_.dwsc_count; ++i) {
    const std::string name = block_name("dwsc", i);
    dwsc_.push_back({DepthwiseSeparable<T>(name, in, in, rng),
                     BatchNorm<T>(name + ".bn", in, cfg_.bn_momentum, cfg_.bn_eps)});
  }
  if (cfg_.pcb_enabled) {
    tx_ = TxLayer{cfg_.tx_m, cfg_.tx_c};
    std::size_t pin = cfg_.base_filters[cfg_.pcb_tap_block - 1];
    for (std::size_t i = 0; i < cfg_.pcb_filters.size(); ++i) {
      const std::string name = block_name("pcb", i);
      const std::size_t out = cfg_.pcb_filters[i];
      pcb_.push_back({Conv2D<T>(name + ".conv", pin, out, cfg_.other_kernels, rng),
                      BatchNorm<T>(name + ".bn", out, cfg_.bn_momentum, cfg_.bn_eps)});
      pin = out;
    }
  }
  dense_ = Dense<T>("dense", cfg_.pre_gap_channels(), cfg_.num_classes, rng);
}

template <typename T>
void AdliteNet<T>::check_input(const BasicTensor<T>& x) const {
  if (x.rank() != 4 || x.dim(0) == 0 || x.dim(1) != cfg_.input_channels ||
      x.dim(2) != cfg_.input_size || x.dim(3) != cfg_.input_size) {
    throw ShapeError("model expects (N, " + std::to_string(cfg_.input_channels) + ", " +
                     std::to_string(cfg_.input_size) + ", " + std::to_string(cfg_.input_size) +
                     "), got " + shape_str(x.shape()));
  }
}

namespace {

// One Conv -> ReLU -> MaxPool -> BN block. `train` selects batch statistics.
template <typename T>
BasicTensor<T> run_block(ConvBlock<T>& b, const std::string& name, const BasicTensor<T>& x,
                         bool train, Trace<T>* trace, typename ModelCache<T>::Block* cache) {
  auto [c, conv_cache] = b.conv.forward(x, Activation::relu);
  if (trace) trace->record(name + ".conv", c);
  auto [p, pool_cache] = maxpool_forward(c);
  if (trace) trace->record(name + ".pool", p);
  BasicTensor<T> out;
  if (train) {
    auto [n, bn_cache] = b.bn.forward(p, Mode::train);
    out = std::move(n);
    if (cache) *cache = {std::move(conv_cache), std::move(pool_cache), std::move(bn_cache)};
  } else {
    out = b.bn.infer(p);
  }
  if (trace) trace->record(name + ".bn", out);
  return out;
}

template <typename T>
BasicTensor<T> run_dwsc(DwscBlock<T>& b, const std::string& name, const BasicTensor<T>& x,
                        bool train, Trace<T>* trace, typename ModelCache<T>::Dwsc* cache) {
  auto [d, dwsc_cache] = b.dwsc.forward(x);
  if (trace) trace->record(name, d);
  BasicTensor<T> out;
  if (train) {
    auto [n, bn_cache] = b.bn.forward(d, Mode::train);
    out = std::move(n);
    if (cache) *cache = {std::move(dwsc_cache), std::move(bn_cache)};
  } else {
    out = b.bn.infer(d);
  }
  if (trace) trace->record(name + ".bn", out);
  return out;
}

template <typename T>
BasicTensor<T> block_backward(ConvBlock<T>& b, const typename ModelCache<T>::Block& c,
                              const BasicTensor<T>& grad) {
  auto bn = b.bn.backward(c.bn, grad);
  b.bn.gamma().grad = std::move(bn.gamma);
  b.bn.beta().grad = std::move(bn.beta);
  auto gp = maxpool_backward(c.pool, bn.input);
  auto cv = b.conv.backward(c.conv, gp);
  b.conv.weights().grad = std::move(cv.weights);
  b.conv.bias().grad = std::move(cv.bias);
  return std::move(cv.input);
}

}  // namespace

template <typename T>
ForwardResult<T> AdliteNet<T>::forward(const BasicTensor<T>& x, Mode mode, Trace<T>* trace) {
  if (mode == Mode::infer) {
    auto logits = infer_logits(x, trace);
    auto probs = softmax(logits);
    return {std::move(logits), std::move(probs), std::nullopt};
  }
  check_input(x);
  ModelCache<T> cache;
  cache.generation = ++generation_;
  cache.base.resize(base_.size());
  cache.dwsc.resize(dwsc_.size());
  cache.pcb.resize(pcb_.size());

  BasicTensor<T> h = x;
  BasicTensor<T> tap;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    h = run_block(base_[i], block_name("block", i), h, true, trace, &cache.base[i]);
    if (cfg_.pcb_enabled && i + 1 == cfg_.pcb_tap_block) tap = h;
  }
  for (std::size_t i = 0; i < dwsc_.size(); ++i) {
    h = run_dwsc(dwsc_[i], block_name("dwsc", i), h, true, trace, &cache.dwsc[i]);
  }
  if (cfg_.pcb_enabled) {
    cache.tap_shape = tap.shape();
    BasicTensor<T> p = tx_.forward(tap);
    if (trace) trace->record("pcb.tx", p);
    for (std::size_t i = 0; i < pcb_.size(); ++i) {
      p = run_block(pcb_[i], block_name("pcb", i), p, true, trace, &cache.pcb[i]);
    }
    h = concat_channels(p, h);
    if (trace) trace->record("concat", h);
  }
  cache.pre_gap_shape = h.shape();
  BasicTensor<T> pooled = reduce_mean_spatial(h);
  if (trace) trace->record("gap", pooled);
  auto [logits, dense_cache] = dense_.forward(pooled);
  if (trace) trace->record("dense", logits);
  cache.dense = std::move(dense_cache);
  require_finite(logits, "model logits");
  auto probs = softmax(logits);
  return {std::move(logits), std::move(probs), std::move(cache)};
}

template <typename T>
BasicTensor<T> AdliteNet<T>::infer_logits(const BasicTensor<T>& x, Trace<T>* trace) const {
  check_input(x);
  // Infer-mode blocks never mutate, so the const_cast only serves the shared
  // block helpers' signatures.
  auto& self = const_cast<AdliteNet<T>&>(*this);
  BasicTensor<T> h = x;
  BasicTensor<T> tap;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    h = run_block<T>(self.base_[i], block_name("block", i), h, false, trace, nullptr);
    if (cfg_.pcb_enabled && i + 1 == cfg_.pcb_tap_block) tap = h;
  }
  for (std::size_t i = 0; i < dwsc_.size(); ++i) {
    h = run_dwsc<T>(self.dwsc_[i], block_name("dwsc", i), h, false, trace, nullptr);
  }
  if (cfg_.pcb_enabled) {
    BasicTensor<T> p = tx_.forward(tap);
    if (trace) trace->record("pcb.tx", p);
    for (std::size_t i = 0; i < pcb_.size(); ++i) {
      p = run_block<T>(self.pcb_[i], block_name("pcb", i), p, false, trace, nullptr);
    }
    h = concat_channels(p, h);
    if (trace) trace->record("concat", h);
  }
  BasicTensor<T> pooled = reduce_mean_spatial(h);
  if (trace) trace->record("gap", pooled);
  auto logits = dense_.forward(pooled).first;
  if (trace) trace->record("dense", logits);
  require_finite(logits, "model logits");
  return logits;
}

template <typename T>
void AdliteNet<T>::backward(const ModelCache<T>& cache, const BasicTensor<T>& grad_logits,
                            BranchMask mask, TapGradients<T>* tap) {
  if (cache.generation == 0) throw StateError("backward called without a train-mode cache");
  if (cache.generation != generation_) {
    throw StateError("backward called with a stale cache (generation " +
                     std::to_string(cache.generation) + ", current " + std::to_string(generation_) +
                     ")");
  }
  auto dense_grads = dense_.backward(cache.dense, grad_logits);
  dense_.weights().grad = std::move(dense_grads.weights);
  dense_.bias().grad = std::move(dense_grads.bias);
  BasicTensor<T> g = gap_backward(dense_grads.input, cache.pre_gap_shape);

  BasicTensor<T> g_base = g;
  BasicTensor<T> g_pcb;
  if (cfg_.pcb_enabled) {
    const std::size_t pc = cfg_.pcb_channels();
    g_pcb = slice_channels(g, 0, pc);
    g_base = slice_channels(g, pc, g.dim(1));
    if (mask == BranchMask::base_only) g_pcb.fill(T{0});
    if (mask == BranchMask::pcb_only) g_base.fill(T{0});
  }

  for (std::size_t i = dwsc_.size(); i-- > 0;) {
    auto bn = dwsc_[i].bn.backward(cache.dwsc[i].bn, g_base);
    dwsc_[i].bn.gamma().grad = std::move(bn.gamma);
    dwsc_[i].bn.beta().grad = std::move(bn.beta);
    auto d = dwsc_[i].dwsc.backward(cache.dwsc[i].dwsc, bn.input);
    dwsc_[i].dwsc.depthwise_weights().grad = std::move(d.depthwise_weights);
    dwsc_[i].dwsc.depthwise_bias().grad = std::move(d.depthwise_bias);
    dwsc_[i].dwsc.pointwise_weights().grad = std::move(d.pointwise_weights);
    dwsc_[i].dwsc.pointwise_bias().grad = std::move(d.pointwise_bias);
    g_base = std::move(d.input);
  }

  const std::size_t tap_index = cfg_.pcb_enabled ? cfg_.pcb_tap_block : 0;
  for (std::size_t i = base_.size(); i-- > tap_index;) {
    g_base = block_backward(base_[i], cache.base[i], g_base);
  }

  if (cfg_.pcb_enabled) {
    for (std::size_t i = pcb_.size(); i-- > 0;) {
      g_pcb = block_backward(pcb_[i], cache.pcb[i], g_pcb);
    }
    g_pcb = tx_.backward(g_pcb);
    // fan-out at the tap: both consumers contribute
    BasicTensor<T> total = g_base;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += g_pcb[i];
    if (tap) *tap = {g_base, g_pcb, total};
    g_base = std::move(total);
  }

  for (std::size_t i = tap_index; i-- > 0;) {
    g_base = block_backward(base_[i], cache.base[i], g_base);
  }
}

template <typename T>
std::vector<Parameter<T>*> AdliteNet<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto add_block = [&](ConvBlock<T>& b) {
    out.push_back(&b.conv.weights());
    out.push_back(&b.conv.bias());
    out.push_back(&b.bn.gamma());
    out.push_back(&b.bn.beta());
  };
  for (auto& b : base_) add_block(b);
  for (auto& d : dwsc_) {
    out.push_back(&d.dwsc.depthwise_weights());
    out.push_back(&d.dwsc.depthwise_bias());
    out.push_back(&d.dwsc.pointwise_weights());
    out.push_back(&d.dwsc.pointwise_bias());
    out.push_back(&d.bn.gamma());
    out.push_back(&d.bn.beta());
  }
  for (auto& b : pcb_) add_block(b);
  out.push_back(&dense_.weights());
  out.push_back(&dense_.bias());
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> AdliteNet<T>::parameters() const {
  auto mut = const_cast<AdliteNet<T>&>(*this).parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<Buffer<T>> AdliteNet<T>::buffers() {
  std::vector<Buffer<T>> out;
  auto add = [&](BatchNorm<T>& bn) {
    const std::string base = bn.gamma().name.substr(0, bn.gamma().name.size() - 6);  // ".gamma"
    out.push_back({base + ".running_mean", &bn.running_mean()});
    out.push_back({base + ".running_var", &bn.running_var()});
  };
  for (auto& b : base_) add(b.bn);
  for (auto& d : dwsc_) add(d.bn);
  for (auto& b : pcb_) add(b.bn);
  return out;
}

template <typename T>
std::size_t AdliteNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template struct Trace<float>;
template struct Trace<double>;
template struct Trace<long double>;
template class AdliteNet<float>;
template class AdliteNet<double>;
template class AdliteNet<long double>;
template BasicTensor<float> gap_backward<float>(const BasicTensor<float>&, const Shape&);
template BasicTensor<double> gap_backward<double>(const BasicTensor<double>&, const Shape&);
template BasicTensor<long double> gap_backward<long double>(const BasicTensor<long double>&, const Shape&);

}  // namespace adlite
