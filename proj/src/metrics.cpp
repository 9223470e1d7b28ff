#include "adlite/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "adlite/errors.hpp"

namespace adlite {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t count) {
  if (truth >= k_ || pred >= k_) {
    throw LabelError("confusion matrix label (" + std::to_string(truth) + ", " +
                     std::to_string(pred) + ") out of range for " + std::to_string(k_) + " classes");
  }
  counts_[truth * k_ + pred] += count;
}

void ConfusionMatrix::accumulate(std::span<const std::uint32_t> truth,
                                 std::span<const std::uint32_t> predicted) {
  if (truth.size() != predicted.size()) {
    throw LabelError("confusion matrix: " + std::to_string(truth.size()) + " labels vs " +
                     std::to_string(predicted.size()) + " predictions");
  }
  // validate first so a bad label leaves the matrix untouched
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k_ || predicted[i] >= k_) {
      throw LabelError("confusion matrix label out of range at position " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < truth.size(); ++i) counts_[truth[i] * k_ + predicted[i]]++;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw LabelError("cannot add confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t p = 0; p < k_; ++p) os << ',' << class_names.at(p);
  os << '\n';
  for (std::size_t t = 0; t < k_; ++t) {
    os << class_names.at(t);
    for (std::size_t p = 0; p < k_; ++p) os << ',' << (*this)(t, p);
    os << '\n';
  }
  return os.str();
}

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  ClassificationReport r;
  r.total = cm.total();
  r.per_class.resize(k);
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t col = 0, row = 0;
    for (std::size_t j = 0; j < k; ++j) {
      col += cm(j, c);
      row += cm(c, j);
    }
    const double tp = static_cast<double>(cm(c, c));
    auto& m = r.per_class[c];
    m.precision = safe_div(tp, static_cast<double>(col));
    m.recall = safe_div(tp, static_cast<double>(row));
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.support = row;
    trace += cm(c, c);
  }
  r.accuracy = safe_div(static_cast<double>(trace), static_cast<double>(r.total));
  for (const auto& m : r.per_class) {
    r.macro.precision += m.precision;
    r.macro.recall += m.recall;
    r.macro.f1 += m.f1;
    const double w = safe_div(static_cast<double>(m.support), static_cast<double>(r.total));
    r.weighted.precision += w * m.precision;
    r.weighted.recall += w * m.recall;
    r.weighted.f1 += w * m.f1;
  }
  if (k > 0) {
    r.macro.precision /= static_cast<double>(k);
    r.macro.recall /= static_cast<double>(k);
    r.macro.f1 /= static_cast<double>(k);
  }
  return r;
}

AucResult roc_auc_ovr(std::span<const std::uint32_t> truth, std::span<const double> probs,
                      std::size_t num_classes) {
  const std::size_t n = truth.size();
  if (probs.size() != n * num_classes) {
    throw LabelError("roc_auc_ovr: probability matrix does not match label count");
  }
  AucResult out;
  out.per_class.resize(num_classes);
  std::vector<std::size_t> order(n);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return probs[a * num_classes + c] < probs[b * num_classes + c];
    });
    // Walk tie groups in ascending score; each positive beats every negative
    // in lower groups and ties with the negatives in its own group.
    std::uint64_t negatives_below = 0, positives = 0, negatives = 0;
    std::uint64_t wins = 0, ties = 0;
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      std::uint64_t gp = 0, gn = 0;
      const double score = probs[order[i] * num_classes + c];
      while (j < n && probs[order[j] * num_classes + c] == score) {
        if (truth[order[j]] >= num_classes) throw LabelError("roc_auc_ovr: label out of range");
        (truth[order[j]] == c ? gp : gn)++;
        ++j;
      }
      wins += gp * negatives_below;
      ties += gp * gn;
      negatives_below += gn;
      positives += gp;
      negatives += gn;
      i = j;
    }
    if (positives == 0 || negatives == 0) {
      out.excluded.push_back(c);
      continue;
    }
    const double auc = (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) /
                       (static_cast<double>(positives) * static_cast<double>(negatives));
    out.per_class[c] = auc;
    sum += auc;
    ++defined;
  }
  if (defined > 0) out.macro = sum / static_cast<double>(defined);
  return out;
}

ClassificationReport classification_report(const ConfusionMatrix& cm,
                                           std::span<const std::uint32_t> truth,
                                           std::span<const double> probs) {
  ClassificationReport r = classification_report(cm);
  r.auc = roc_auc_ovr(truth, probs, cm.num_classes());
  return r;
}

std::vector<std::uint32_t> argmax_rows(std::span<const double> probs, std::size_t num_classes) {
  std::vector<std::uint32_t> out(probs.size() / num_classes);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = probs.data() + i * num_classes;
    out[i] = static_cast<std::uint32_t>(std::max_element(row, row + num_classes) - row);
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

std::string format_metric(double v, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << v;
  return os.str();
}

std::string ClassificationReport::to_text(const std::vector<std::string>& class_names) const {
  std::size_t width = 16;
  for (const auto& n : class_names) width = std::max(width, n.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "class" << std::right << std::setw(11)
     << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(9)
     << "support";
  if (auc) os << std::setw(9) << "auc";
  os << '\n';
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& m = per_class[c];
    os << std::left << std::setw(static_cast<int>(width)) << class_names.at(c) << std::right
       << std::setw(11) << format_metric(m.precision) << std::setw(9) << format_metric(m.recall)
       << std::setw(9) << format_metric(m.f1) << std::setw(9) << m.support;
    if (auc) {
      const auto& a = auc->per_class[c];
      os << std::setw(9) << (a ? format_metric(*a) : std::string("n/a"));
    }
    os << '\n';
  }
  auto avg_row = [&](const char* name, const AveragedMetrics& a) {
    os << std::left << std::setw(static_cast<int>(width)) << name << std::right << std::setw(11)
       << format_metric(a.precision) << std::setw(9) << format_metric(a.recall) << std::setw(9)
       << format_metric(a.f1) << std::setw(9) << total << '\n';
  };
  avg_row("macro avg", macro);
  avg_row("weighted avg", weighted);
  os << "accuracy " << format_metric(accuracy) << " over " << total << " samples\n";
  if (auc) {
    os << "macro OVR AUC " << (auc->macro ? format_metric(*auc->macro) : std::string("n/a")) << '\n';
    for (auto c : auc->excluded) {
      os << "warning: " << class_names.at(c)
         << " has no positives or no negatives; excluded from macro AUC\n";
    }
  }
  return os.str();
}

std::string ClassificationReport::to_json(const std::vector<std::string>& class_names) const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["total"] = total;
  auto avg = [](const AveragedMetrics& a) {
    return nlohmann::json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  j["macro"] = avg(macro);
  j["weighted"] = avg(weighted);
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& m = per_class[c];
    nlohmann::json e{{"class", class_names.at(c)},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"support", m.support}};
    if (auc) e["auc"] = auc->per_class[c] ? nlohmann::json(*auc->per_class[c]) : nlohmann::json();
    classes.push_back(e);
  }
  j["classes"] = classes;
  if (auc) {
    j["auc_macro_ovr"] = auc->macro ? nlohmann::json(*auc->macro) : nlohmann::json();
    nlohmann::json excluded = nlohmann::json::array();
    for (auto c : auc->excluded) excluded.push_back(class_names.at(c));
    j["auc_excluded"] = excluded;
  }
  return j.dump(2);
}

}  // namespace adlite
