#include "adlite/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace adlite {

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw NumericError("adam_step: invalid learning rate");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw StateError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " tensors but got " + std::to_string(params.size()));
  }
  const AdamConfig& c = state.config;
  const std::uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));

  std::vector<BasicTensor<T>> new_p(params.size()), new_m(params.size()), new_v(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for " + p.name);
    }
    new_p[i] = p.value;
    new_m[i] = state.m[i];
    new_v[i] = state.v[i];
    auto pv = new_p[i].data();
    auto mv = new_m[i].data();
    auto vv = new_v[i].data();
    auto g = p.grad.data();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      const double gj = g[j];
      const double m = c.beta1 * mv[j] + (1.0 - c.beta1) * gj;
      const double v = c.beta2 * vv[j] + (1.0 - c.beta2) * gj * gj;
      const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
      mv[j] = static_cast<T>(m);
      vv[j] = static_cast<T>(v);
      pv[j] = static_cast<T>(pv[j] - update);
      if (!std::isfinite(pv[j]) || !std::isfinite(vv[j])) {
        throw NumericError("adam_step: non-finite update for " + p.name + "[" + std::to_string(j) +
                           "]");
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = std::move(new_p[i]);
    state.m[i] = std::move(new_m[i]);
    state.v[i] = std::move(new_v[i]);
  }
  state.step = t;
}

double lr_at_epoch(const LrSchedule& s, int epoch) {
  if (epoch < 1) throw ConfigError("epochs are 1-based");
  if (!s.decay_start_epoch || epoch <= *s.decay_start_epoch) return s.base_lr;
  if (s.kind == DecayKind::one_shot) return s.base_lr * (1.0 - s.decay_rate);
  return s.base_lr * std::pow(1.0 - s.decay_rate, epoch - *s.decay_start_epoch);
}

Regime regime_preset(const std::string& name) {
  if (name == "ad") return {"ad", 18, LrSchedule{0.00095, 8, 0.05, DecayKind::multiplicative}};
  if (name == "adni") return {"adni", 15, LrSchedule{0.00095, std::nullopt, 0.05, DecayKind::multiplicative}};
  if (name == "oasis") return {"oasis", 7, LrSchedule{0.00095, 4, 0.05, DecayKind::multiplicative}};
  throw ConfigError("unknown regime '" + name + "' (expected ad, adni or oasis)");
}

double Evaluation::accuracy() const {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += labels[i] == predictions[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

namespace {

std::span<const double> loss_weights(const TrainOptions& opts) {
  if (opts.loss == LossKind::wcce) return opts.class_weights;
  return {};
}

}  // namespace

template <typename T>
EpochStats train_epoch(AdliteNet<T>& model, AdamState<T>& adam, const LabeledImages& data,
                       std::span<const std::size_t> order, const TrainOptions& opts, double lr) {
  if (opts.batch_size == 0) throw ConfigError("batch_size must be positive");
  auto params = model.parameters();
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += opts.batch_size, ++batch_index) {
    const auto idx = order.subspan(start, std::min(opts.batch_size, order.size() - start));
    try {
      BasicTensor<T> x = make_batch<T>(data, idx, opts.preprocess);
      std::vector<std::uint32_t> y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back(data.labels.at(i));
      auto fwd = model.forward(x, Mode::train);
      auto loss = softmax_cce(fwd.logits, y, loss_weights(opts));
      model.backward(*fwd.cache, loss.grad_logits);
      adam_step<T>(params, adam, lr);
      loss_sum += loss.loss * static_cast<double>(idx.size());
      const std::size_t k = fwd.probs.dim(1);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const T* row = fwd.probs.data().data() + i * k;
        correct += static_cast<std::size_t>(std::max_element(row, row + k) - row) == y[i];
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (batch " + std::to_string(batch_index) + ")");
    }
  }
  stats.samples = order.size();
  if (!order.empty()) {
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
  }
  return stats;
}

template <typename T>
Evaluation evaluate(const AdliteNet<T>& model, const LabeledImages& data,
                    std::span<const std::size_t> positions, const TrainOptions& opts) {
  std::vector<std::size_t> all;
  if (positions.empty()) {
    all.resize(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    positions = all;
  }
  const std::size_t k = model.config().num_classes;
  const std::size_t bs = std::max<std::size_t>(opts.batch_size, 1);
  Evaluation ev;
  ev.labels.reserve(positions.size());
  ev.probabilities.reserve(positions.size() * k);
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < positions.size(); start += bs) {
    const auto idx = positions.subspan(start, std::min(bs, positions.size() - start));
    BasicTensor<T> x = make_batch<T>(data, idx, opts.preprocess);
    std::vector<std::uint32_t> y;
    for (auto i : idx) y.push_back(data.labels.at(i));
    auto logits = model.infer_logits(x);
    auto loss = softmax_cce(logits, y, loss_weights(opts));
    loss_sum += loss.loss * static_cast<double>(idx.size());
    for (auto v : loss.probs.data()) ev.probabilities.push_back(static_cast<double>(v));
    ev.labels.insert(ev.labels.end(), y.begin(), y.end());
  }
  if (!positions.empty()) ev.loss = loss_sum / static_cast<double>(positions.size());
  ev.predictions.resize(ev.labels.size());
  for (std::size_t i = 0; i < ev.labels.size(); ++i) {
    const double* row = ev.probabilities.data() + i * k;
    ev.predictions[i] = static_cast<std::uint32_t>(std::max_element(row, row + k) - row);
  }
  return ev;
}

template <typename T>
TrainRun fit(AdliteNet<T>& model, AdamState<T>& adam, const LabeledImages& data,
             std::span<const std::size_t> train_positions,
             std::span<const std::size_t> val_positions, const LrSchedule& schedule, int epochs,
             const TrainOptions& opts, std::uint64_t seed, const EpochCallback& on_epoch) {
  {
    std::vector<std::size_t> a(train_positions.begin(), train_positions.end());
    std::vector<std::size_t> b(val_positions.begin(), val_positions.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    if (!common.empty()) throw SplitError("train and validation sets overlap");
  }
  TrainRun run;
  run.seed = seed;
  const Rng root(seed);
  std::vector<std::size_t> order(train_positions.begin(), train_positions.end());
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(schedule, epoch);
    std::copy(train_positions.begin(), train_positions.end(), order.begin());
    Rng shuffle = root.derive(static_cast<std::uint64_t>(epoch));
    shuffle.shuffle(std::span<std::size_t>(order));
    const EpochStats tr = train_epoch(model, adam, data, order, opts, lr);
    EpochRecord rec{epoch, lr, tr.loss, tr.accuracy, 0.0, 0.0, 0.0};
    if (!val_positions.empty()) {
      const Evaluation ev = evaluate(model, data, val_positions, opts);
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return run;
}

#define ADLITE_INSTANTIATE(T)                                                                     \
  template void adam_step<T>(std::span<Parameter<T>* const>, AdamState<T>&, double);             \
  template EpochStats train_epoch<T>(AdliteNet<T>&, AdamState<T>&, const LabeledImages&,          \
                                     std::span<const std::size_t>, const TrainOptions&, double);  \
  template Evaluation evaluate<T>(const AdliteNet<T>&, const LabeledImages&,                      \
                                  std::span<const std::size_t>, const TrainOptions&);             \
  template TrainRun fit<T>(AdliteNet<T>&, AdamState<T>&, const LabeledImages&,                    \
                           std::span<const std::size_t>, std::span<const std::size_t>,            \
                           const LrSchedule&, int, const TrainOptions&, std::uint64_t,            \
                           const EpochCallback&);

ADLITE_INSTANTIATE(float)
ADLITE_INSTANTIATE(double)

#undef ADLITE_INSTANTIATE

}  // namespace adlite
