#pragma once

#include <vector>

#include "adlite/model.hpp"
#include "oracles.hpp"

namespace oracle {

/// Small two-branch net whose five pools take 32 -> 1.
inline adlite::AdliteConfig tiny_config() {
  adlite::AdliteConfig cfg;
  cfg.input_size = 32;
  cfg.input_channels = 1;
  cfg.num_classes = 2;
  cfg.base_filters = {2, 2, 2, 2, 2};
  cfg.pcb_filters = {2, 2};
  return cfg;
}

/// Mean softmax cross-entropy accumulated in long double.
inline long double reference_cce(const adlite::BasicTensor<long double>& logits,
                                 const std::vector<std::uint32_t>& y) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  long double total = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    long double m = logits[i * k];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits[i * k + j]);
    long double s = 0.0L;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(logits[i * k + j] - m);
    total += m + std::log(s) - logits[i * k + y[i]];
  }
  return total / static_cast<long double>(n);
}

struct GraphCheck {
  std::vector<double> errors;  // one per sampled coordinate
  double max_error = 0.0;
};

/// Train-mode loss gradient of the whole double-precision graph against
/// central differences on `samples` randomly chosen parameter coordinates.
/// The differences are taken on a long double replica of the same weights:
/// with the 255 offset of the Tx layer, double rounding noise in the loss is
/// about 1e-10 after dividing by 2h, which swamps gradients that are
/// structurally close to zero (conv biases in front of BN).
inline GraphCheck whole_graph_gradcheck(std::uint64_t seed, std::size_t samples,
                                        std::size_t batch = 16) {
  using namespace adlite;
  Rng rng(seed);
  const AdliteConfig cfg = tiny_config();
  AdliteNet<double> net(cfg, rng);
  Rng unused(0);
  AdliteNet<long double> ref(cfg, unused);
  auto params = net.parameters();
  auto ref_params = ref.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ref_params[i]->value = params[i]->value.cast<long double>();
  }

  TensorD x({batch, cfg.input_channels, cfg.input_size, cfg.input_size});
  for (auto& v : x.data()) v = rng.uniform();
  const auto x_ref = x.cast<long double>();
  std::vector<std::uint32_t> y(batch);
  for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<std::uint32_t>(i % cfg.num_classes);

  auto fwd = net.forward(x, Mode::train);
  auto res = softmax_cce(fwd.logits, y);
  net.backward(*fwd.cache, res.grad_logits);

  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  const long double h = 1e-6L;
  GraphCheck out;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = rng.below(total), which = 0;
    while (flat >= params[which]->value.size()) flat -= params[which++]->value.size();
    long double& v = ref_params[which]->value[flat];
    const long double saved = v;
    v = saved + h;
    const long double up = reference_cce(ref.forward(x_ref, Mode::train).logits, y);
    v = saved - h;
    const long double down = reference_cce(ref.forward(x_ref, Mode::train).logits, y);
    v = saved;
    const double numeric = static_cast<double>((up - down) / (2.0L * h));
    const double err = rel_error(params[which]->grad[flat], numeric);
    out.errors.push_back(err);
    out.max_error = std::max(out.max_error, err);
  }
  return out;
}

}  // namespace oracle
