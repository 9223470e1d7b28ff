#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adlite {

/// K x K counts; entry (t, p) is the number of samples of true class t
/// predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : k_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return k_; }
  std::uint64_t operator()(std::size_t truth, std::size_t pred) const {
    return counts_[truth * k_ + pred];
  }
  std::uint64_t total() const;

  /// Throws LabelError for labels >= K or mismatched lengths.
  void accumulate(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted);
  void add(std::size_t truth, std::size_t pred, std::uint64_t count = 1);

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

  /// CSV with a header row of predicted class names and one row per true class.
  std::string to_csv(const std::vector<std::string>& class_names) const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct AveragedMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct AucResult {
  std::vector<std::optional<double>> per_class;  // nullopt: no positives or no negatives
  std::optional<double> macro;                   // mean over defined classes
  std::vector<std::size_t> excluded;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AveragedMetrics macro;
  AveragedMetrics weighted;
  std::optional<AucResult> auc;
  std::uint64_t total = 0;

  /// Aligned table, 3 decimals.
  std::string to_text(const std::vector<std::string>& class_names) const;
  std::string to_json(const std::vector<std::string>& class_names) const;
};

/// Zero denominators yield 0 for precision, recall and F1.
ClassificationReport classification_report(const ConfusionMatrix& cm);

/// One-vs-rest AUC per class via the rank statistic (ties count 1/2), macro
/// over classes having both positives and negatives. `probs` is N x K
/// row-major.
AucResult roc_auc_ovr(std::span<const std::uint32_t> truth, std::span<const double> probs,
                      std::size_t num_classes);

/// Report with the AUC section filled in.
ClassificationReport classification_report(const ConfusionMatrix& cm,
                                           std::span<const std::uint32_t> truth,
                                           std::span<const double> probs);

/// Argmax per row; ties go to the lowest class index.
std::vector<std::uint32_t> argmax_rows(std::span<const double> probs, std::size_t num_classes);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

/// Fixed 3-decimal rendering used by every report.
std::string format_metric(double v, int decimals = 3);

}  // namespace adlite
