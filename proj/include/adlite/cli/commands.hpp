#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adlite/cli/run_config.hpp"
#include "adlite/data.hpp"
#include "adlite/metrics.hpp"

namespace adlite::cli {

// ---------------------------------------------------------------------------
// Dataset loading shared by train, eval and kfold.

struct LoadedData {
  DatasetIndex index;
  std::vector<std::filesystem::path> sources;  // absolute
};

/// One path loads directly; several are merged through the class map
/// (dataset name = file stem or directory name).
LoadedData load_data(const std::vector<std::string>& paths, DataFormat format,
                     const std::string& class_map, std::ostream& log);

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SyntheticSpec spec;
  std::filesystem::path output;
};

void cmd_synth(const SynthOptions& opts, std::ostream& log);

// ---------------------------------------------------------------------------
// train

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<std::string> class_names;
  TrainRun run;
  ConfusionMatrix confusion;
  ClassificationReport test_report;
};

/// Writes config.json, epochs.jsonl, model.adlt, test_report.{txt,json},
/// confusion.csv and test_manifest.json into cfg.output_dir.
TrainResult cmd_train(RunConfig cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::filesystem::path run_dir;     // uses model.adlt + test_manifest.json
  std::filesystem::path checkpoint;  // alternative: checkpoint + data paths
  std::vector<std::string> data_paths;
  std::filesystem::path output_dir;  // default: <run_dir>/eval or ./eval
};

struct EvalResult {
  std::filesystem::path output_dir;
  ConfusionMatrix confusion;
  ClassificationReport report;
};

/// Writes report.{txt,json} and confusion.csv.
EvalResult cmd_eval(const EvalOptions& opts, std::ostream& log);

// ---------------------------------------------------------------------------
// kfold

struct FoldMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // weighted averages
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // macro one-vs-rest
};

FoldMetrics fold_metrics(const ClassificationReport& r);

struct KfoldSummary {
  MeanStd accuracy;
  MeanStd precision;
  MeanStd recall;
  MeanStd f1;
  std::optional<MeanStd> auc;  // present when every fold has one
};

KfoldSummary summarize_folds(std::span<const FoldMetrics> folds);
/// Fold rows followed by a "mean±std" row, 3 decimals.
std::string render_kfold_table(std::span<const FoldMetrics> folds, const KfoldSummary& s);

struct KfoldResult {
  std::vector<FoldMetrics> folds;
  KfoldSummary summary;
};

KfoldResult cmd_kfold(RunConfig cfg, std::ostream& log);

// ---------------------------------------------------------------------------
// audit

/// count / 100000 with two decimals.
std::string format_lakhs(std::size_t count);
std::string render_param_audit(const ParamAudit& a);
std::string render_shape_audit(const AdliteConfig& cfg);
void cmd_audit(const AdliteConfig& cfg, AuditMode mode, bool as_json, std::ostream& out);

// ---------------------------------------------------------------------------
// tx-preview

/// Pixelwise m * (c - x), clamped to [0, 255] and rounded.
Image tx_image(const Image& img, double m, double c);

struct TxPreviewOptions {
  std::vector<std::filesystem::path> inputs;
  double m = 0.8;
  double c = 255.0;
  std::filesystem::path output_dir = "tx_preview";
};

/// For each input writes <stem>_tx and <stem>_pair (original | transform).
std::vector<std::filesystem::path> cmd_txpreview(const TxPreviewOptions& opts, std::ostream& log);

}  // namespace adlite::cli
