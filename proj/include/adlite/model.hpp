#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adlite/layers.hpp"

namespace adlite {

/// Architecture description of the two-branch network. The same struct drives
/// model construction and the closed-form audits.
struct AdliteConfig {
  std::size_t input_size = 224;
  std::size_t input_channels = 1;
  std::size_t num_classes = 4;
  std::vector<std::size_t> base_filters{16, 32, 64, 96, 128};
  std::size_t first_kernel = 5;
  std::size_t other_kernels = 3;
  std::size_t dwsc_count = 2;
  bool pcb_enabled = true;
  std::size_t pcb_tap_block = 3;  // 1-based
  std::vector<std::size_t> pcb_filters{32, 64};
  double tx_m = 0.8;
  double tx_c = 255.0;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::size_t pool_count() const { return base_filters.size(); }
  std::size_t final_spatial() const { return input_size >> pool_count(); }
  std::size_t base_channels() const { return base_filters.back(); }
  /// Channels of the branch-side input to the concat (0 when disabled).
  std::size_t pcb_channels() const;
  std::size_t pre_gap_channels() const { return base_channels() + pcb_channels(); }
};

// ---------------------------------------------------------------------------
// Closed-form audits.

/// Spatial extent after `pools` 2x2/2 max-pools: extent / 2^pools. Throws
/// ConfigError when the division is not exact.
std::size_t pooled_extent(std::size_t extent, std::size_t pools);

enum class AuditMode { full, paper };

struct ParamAuditEntry {
  std::string name;
  std::string formula;             // human-readable closed form
  std::size_t formula_count = 0;   // count under the audit mode
  std::size_t actual_count = 0;    // scalars the model allocates for this layer
};

struct ParamAudit {
  AuditMode mode = AuditMode::full;
  std::vector<ParamAuditEntry> entries;
  std::size_t total = 0;            // sum of formula_count
  std::size_t allocated_total = 0;  // sum of actual_count
};

ParamAudit param_audit(const AdliteConfig& cfg, AuditMode mode);

struct ShapeEntry {
  std::string name;
  Shape shape;  // per-sample shape, batch dimension dropped
};

/// Symbolic shape propagation; allocates no tensors.
std::vector<ShapeEntry> shape_audit(const AdliteConfig& cfg);

// ---------------------------------------------------------------------------
// Model graph.

template <typename T>
struct ConvBlock {
  Conv2D<T> conv;
  BatchNorm<T> bn;
};

template <typename T>
struct DwscBlock {
  DepthwiseSeparable<T> dwsc;
  BatchNorm<T> bn;
};

template <typename T>
struct ModelCache {
  struct Block {
    ConvCache<T> conv;
    MaxPoolCache pool;
    BatchNormCache<T> bn;
  };
  struct Dwsc {
    DwscCache<T> dwsc;
    BatchNormCache<T> bn;
  };
  std::uint64_t generation = 0;
  std::vector<Block> base;
  std::vector<Dwsc> dwsc;
  std::vector<Block> pcb;
  Shape tap_shape;
  Shape pre_gap_shape;
  DenseCache<T> dense;
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> logits;
  BasicTensor<T> probs;
  std::optional<ModelCache<T>> cache;  // present only after a train-mode forward
};

/// Optional per-node record of a forward pass.
template <typename T>
struct Trace {
  bool keep_tensors = false;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<BasicTensor<T>> outputs;

  void record(const std::string& name, const BasicTensor<T>& t) {
    names.push_back(name);
    shapes.push_back(t.shape());
    if (keep_tensors) outputs.push_back(t);
  }
  const BasicTensor<T>& output(const std::string& name) const;
};

/// Restricts which concat slice receives upstream gradient in backward().
enum class BranchMask { both, base_only, pcb_only };

/// Gradients arriving at the tap block output from each consumer.
template <typename T>
struct TapGradients {
  BasicTensor<T> base;
  BasicTensor<T> pcb;
  BasicTensor<T> total;
};

template <typename T>
class AdliteNet {
 public:
  AdliteNet(const AdliteConfig& cfg, Rng& rng);

  const AdliteConfig& config() const { return cfg_; }

  /// Train mode uses batch statistics, updates BN running stats and returns a
  /// cache for backward(). Infer mode is side-effect free.
  ForwardResult<T> forward(const BasicTensor<T>& x, Mode mode, Trace<T>* trace = nullptr);

  /// Infer-mode logits; const, safe for concurrent callers.
  BasicTensor<T> infer_logits(const BasicTensor<T>& x, Trace<T>* trace = nullptr) const;

  /// Writes dLoss/dParam into every Parameter::grad (overwriting).
  void backward(const ModelCache<T>& cache, const BasicTensor<T>& grad_logits,
                BranchMask mask = BranchMask::both, TapGradients<T>* tap = nullptr);

  /// Trainable tensors in graph order.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  /// BN running statistics in graph order.
  std::vector<Buffer<T>> buffers();
  std::size_t parameter_count() const;

  std::size_t standard_conv_count() const { return base_.size() + pcb_.size(); }
  std::size_t dwsc_count() const { return dwsc_.size(); }
  bool has_tx() const { return cfg_.pcb_enabled; }

  std::vector<ConvBlock<T>>& base_blocks() { return base_; }
  std::vector<DwscBlock<T>>& dwsc_blocks() { return dwsc_; }
  std::vector<ConvBlock<T>>& pcb_blocks() { return pcb_; }
  const TxLayer& tx() const { return tx_; }
  Dense<T>& dense() { return dense_; }

 private:
  void check_input(const BasicTensor<T>& x) const;

  AdliteConfig cfg_;
  std::vector<ConvBlock<T>> base_;
  std::vector<DwscBlock<T>> dwsc_;
  TxLayer tx_;
  std::vector<ConvBlock<T>> pcb_;
  Dense<T> dense_;
  std::uint64_t generation_ = 0;
};

/// Spatial mean (N, C, H, W) -> (N, C) and its adjoint.
template <typename T>
BasicTensor<T> gap_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

}  // namespace adlite
