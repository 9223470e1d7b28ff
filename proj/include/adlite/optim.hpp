#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adlite/data.hpp"
#include "adlite/model.hpp"

namespace adlite {

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> m;  // one per parameter, graph order
  std::vector<BasicTensor<T>> v;
};

/// Bias-corrected Adam update of every parameter from its grad buffer. The
/// whole step is computed before anything is written, so a non-finite result
/// throws NumericError and leaves parameters and state untouched.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr);

// ---------------------------------------------------------------------------
// Learning-rate schedule

enum class DecayKind { multiplicative, one_shot };

struct LrSchedule {
  double base_lr = 0.00095;
  std::optional<int> decay_start_epoch;  // none: constant rate
  double decay_rate = 0.05;
  DecayKind kind = DecayKind::multiplicative;
};

/// multiplicative: base * (1 - rate)^max(0, epoch - start)
/// one_shot:       base * (1 - rate) once epoch > start
double lr_at_epoch(const LrSchedule& s, int epoch);

struct Regime {
  std::string name;
  int epochs = 0;
  LrSchedule schedule;
};

/// "ad" (18 epochs, decay after 8), "adni" (15 epochs, constant),
/// "oasis" (7 epochs, decay after 4). Throws ConfigError otherwise.
Regime regime_preset(const std::string& name);

// ---------------------------------------------------------------------------
// Training loop

enum class LossKind { cce, wcce };

struct TrainOptions {
  std::size_t batch_size = 64;
  PreprocessOptions preprocess;
  LossKind loss = LossKind::cce;
  std::vector<double> class_weights;  // used when loss == wcce
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t samples = 0;
};

/// One pass over `order` in batches (last partial batch kept), one Adam step
/// per batch, BN in train mode.
template <typename T>
EpochStats train_epoch(AdliteNet<T>& model, AdamState<T>& adam, const LabeledImages& data,
                       std::span<const std::size_t> order, const TrainOptions& opts, double lr);

struct Evaluation {
  double loss = 0.0;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> predictions;  // argmax, ties to the lowest index
  std::vector<double> probabilities;       // N x K row-major
  double accuracy() const;
};

/// Infer-mode pass; never mutates the model.
template <typename T>
Evaluation evaluate(const AdliteNet<T>& model, const LabeledImages& data,
                    std::span<const std::size_t> positions, const TrainOptions& opts);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainRun {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> records;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Sequential epochs with lr_at_epoch, shuffling the training positions with
/// a stream derived from (seed, epoch); validation in infer mode after every
/// epoch; no early stopping. Train and validation positions must be disjoint.
template <typename T>
TrainRun fit(AdliteNet<T>& model, AdamState<T>& adam, const LabeledImages& data,
             std::span<const std::size_t> train_positions,
             std::span<const std::size_t> val_positions, const LrSchedule& schedule, int epochs,
             const TrainOptions& opts, std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace adlite
