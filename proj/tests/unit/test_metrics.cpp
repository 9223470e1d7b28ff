#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adlite/errors.hpp"
#include "adlite/metrics.hpp"
#include "oracles.hpp"

using namespace adlite;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t p = 0; p < rows.size(); ++p) cm.add(t, p, rows[t][p]);
  }
  return cm;
}

// Column sums of 100 with 0, 1, 0 and 3 false positives.
ConfusionMatrix precision_column_matrix() {
  return from_rows({{100, 1, 0, 2},
                    {0, 99, 0, 0},
                    {0, 0, 100, 1},
                    {0, 0, 0, 97}});
}

std::vector<double> random_probs(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<double> p(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += p[i * k + c] = rng.uniform() + 1e-3;
    for (std::size_t c = 0; c < k; ++c) p[i * k + c] /= s;
  }
  return p;
}

std::vector<double> column(const std::vector<double>& probs, std::size_t k, std::size_t c) {
  std::vector<double> out;
  for (std::size_t i = c; i < probs.size(); i += k) out.push_back(probs[i]);
  return out;
}

}  // namespace

TEST_CASE("confusion accumulation") {
  const std::vector<std::uint32_t> y{0, 1, 2, 2, 1, 0, 2};
  const std::vector<std::uint32_t> p{0, 2, 2, 1, 1, 0, 0};
  ConfusionMatrix whole(3);
  whole.accumulate(y, p);
  CHECK(whole.total() == 7);
  CHECK(whole(2, 1) == 1);
  CHECK(whole(0, 0) == 2);

  ConfusionMatrix a(3), b(3);
  a.accumulate(std::span(y).first(3), std::span(p).first(3));
  b.accumulate(std::span(y).subspan(3), std::span(p).subspan(3));
  a += b;
  CHECK(a == whole);

  ConfusionMatrix diag(3);
  diag.accumulate(y, y);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t q = 0; q < 3; ++q) CHECK((t == q || diag(t, q) == 0));
  }
  ConfusionMatrix zeros(3);
  zeros.accumulate(y, std::vector<std::uint32_t>(7, 0));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(zeros(t, 1) == 0);
    CHECK(zeros(t, 2) == 0);
  }

  ConfusionMatrix bad(3);
  const std::vector<std::uint32_t> oob{3};
  CHECK_THROWS_AS(bad.accumulate(oob, oob), LabelError);
  CHECK_THROWS_AS(bad.accumulate(y, oob), LabelError);
}

TEST_CASE("confusion CSV") {
  const auto cm = from_rows({{8, 2}, {3, 7}});
  CHECK(cm.to_csv({"a", "b"}) == "true\\pred,a,b\na,8,2\nb,3,7\n");
}

TEST_CASE("two-class report by hand") {
  const auto r = classification_report(from_rows({{8, 2}, {3, 7}}));
  CHECK(r.per_class[0].precision == doctest::Approx(8.0 / 11.0));
  CHECK(r.per_class[0].recall == doctest::Approx(0.8));
  CHECK(r.per_class[0].f1 == doctest::Approx(0.7619047619));
  CHECK(r.per_class[1].precision == doctest::Approx(7.0 / 9.0));
  CHECK(r.per_class[1].recall == doctest::Approx(0.7));
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.per_class[0].support == 10);
  CHECK(r.total == 20);
}

TEST_CASE("macro precision from the per-class column 1.00, 0.99, 1.00, 0.97") {
  const auto r = classification_report(precision_column_matrix());
  CHECK(r.per_class[0].precision == doctest::Approx(1.00));
  CHECK(r.per_class[1].precision == doctest::Approx(0.99));
  CHECK(r.per_class[2].precision == doctest::Approx(1.00));
  CHECK(r.per_class[3].precision == doctest::Approx(0.97));
  CHECK(r.macro.precision == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(format_metric(r.macro.precision, 2) == "0.99");
}

TEST_CASE("diagonal matrix scores 1 everywhere") {
  const auto r = classification_report(from_rows({{5, 0, 0}, {0, 1, 0}, {0, 0, 9}}));
  for (const auto& m : r.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro.f1 == 1.0);
  CHECK(r.weighted.f1 == 1.0);
}

TEST_CASE("zero denominators give zero") {
  const auto r = classification_report(from_rows({{4, 0, 0}, {2, 0, 0}, {0, 0, 0}}));
  CHECK(r.per_class[1].precision == 0.0);
  CHECK(r.per_class[1].recall == 0.0);
  CHECK(r.per_class[1].f1 == 0.0);
  CHECK(r.per_class[2].recall == 0.0);
  CHECK(r.per_class[2].support == 0);
}

TEST_CASE("recall identities and averaging bounds on random matrices") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    ConfusionMatrix cm(k);
    for (std::size_t t = 0; t < k; ++t) {
      for (std::size_t p = 0; p < k; ++p) cm.add(t, p, rng.below(t == p ? 60 : 15));
    }
    if (cm.total() == 0) continue;
    const auto r = classification_report(cm);
    std::uint64_t tp = 0, fn = 0;
    for (std::size_t c = 0; c < k; ++c) {
      tp += cm(c, c);
      for (std::size_t p = 0; p < k; ++p) fn += p == c ? 0 : cm(c, p);
    }
    CHECK(static_cast<double>(tp) / static_cast<double>(tp + fn) == r.accuracy);
    CHECK(r.weighted.recall == doctest::Approx(r.accuracy).epsilon(1e-14));
    auto within = [&](double v, auto get) {
      double lo = 1.0, hi = 0.0;
      for (const auto& m : r.per_class) {
        lo = std::min(lo, get(m));
        hi = std::max(hi, get(m));
      }
      return v >= lo - 1e-15 && v <= hi + 1e-15;
    };
    CHECK(within(r.weighted.precision, [](const ClassMetrics& m) { return m.precision; }));
    CHECK(within(r.weighted.f1, [](const ClassMetrics& m) { return m.f1; }));
    CHECK(within(r.macro.recall, [](const ClassMetrics& m) { return m.recall; }));
  }
}

TEST_CASE("permuting classes permutes per-class metrics only") {
  const auto cm = from_rows({{30, 2, 1}, {4, 8, 0}, {2, 2, 19}});
  const std::size_t perm[] = {2, 0, 1};
  ConfusionMatrix pm(3);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t p = 0; p < 3; ++p) pm.add(perm[t], perm[p], cm(t, p));
  }
  const auto a = classification_report(cm);
  const auto b = classification_report(pm);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.macro.precision == doctest::Approx(b.macro.precision).epsilon(1e-15));
  CHECK(a.macro.f1 == doctest::Approx(b.macro.f1).epsilon(1e-15));
  CHECK(a.weighted.recall == doctest::Approx(b.weighted.recall).epsilon(1e-15));
  for (std::size_t c = 0; c < 3; ++c) CHECK(a.per_class[c].f1 == b.per_class[perm[c]].f1);
}

TEST_CASE("AUC matches pair counting on random instances") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20, k = 2 + rng.below(3);
    std::vector<std::uint32_t> y(n);
    for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(k));
    auto probs = random_probs(rng, n, k);
    // Coarse quantization creates ties.
    if (trial % 2 == 1) {
      for (auto& p : probs) p = std::round(p * 8.0) / 8.0;
    }
    const auto auc = roc_auc_ovr(y, probs, k);
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), c));
      CHECK(auc.per_class[c].has_value() == (pos > 0 && pos < n));
      if (pos > 0 && pos < n) {
        const double expect = oracle::auc_pairs(y, column(probs, k, c), static_cast<std::uint32_t>(c));
        CHECK(*auc.per_class[c] == expect);
        sum += expect;
        ++defined;
      }
    }
    if (defined) CHECK(*auc.macro == doctest::Approx(sum / static_cast<double>(defined)).epsilon(1e-15));
  }
}

TEST_CASE("AUC edge cases") {
  const std::vector<std::uint32_t> y{0, 0, 1, 1, 1};
  const std::vector<double> sep{0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.3, 0.7, 0.4, 0.6};
  const auto a = roc_auc_ovr(y, sep, 2);
  CHECK(*a.per_class[0] == 1.0);
  CHECK(*a.macro == 1.0);

  const std::vector<double> flat(10, 0.5);
  CHECK(*roc_auc_ovr(y, flat, 2).macro == 0.5);

  const std::vector<std::uint32_t> missing{0, 0, 1, 1};
  const std::vector<double> p3{0.5, 0.3, 0.2, 0.6, 0.2, 0.2, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4};
  const auto m = roc_auc_ovr(missing, p3, 3);
  CHECK_FALSE(m.per_class[2].has_value());
  CHECK(m.excluded == std::vector<std::size_t>{2});
  CHECK(*m.macro == doctest::Approx((*m.per_class[0] + *m.per_class[1]) / 2));
}

TEST_CASE("AUC is invariant under strictly monotone score transforms") {
  Rng rng(8);
  const std::size_t n = 60, k = 3;
  std::vector<std::uint32_t> y(n);
  for (auto& v : y) v = static_cast<std::uint32_t>(rng.below(k));
  const auto probs = random_probs(rng, n, k);
  auto warped = probs;
  for (auto& p : warped) p = std::exp(3.0 * p) - 7.0;
  const auto a = roc_auc_ovr(y, probs, k), b = roc_auc_ovr(y, warped, k);
  for (std::size_t c = 0; c < k; ++c) CHECK(*a.per_class[c] == *b.per_class[c]);
}

TEST_CASE("argmax ties go to the lowest index") {
  const std::vector<double> p{0.4, 0.4, 0.2, 0.1, 0.45, 0.45};
  CHECK(argmax_rows(p, 3) == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("mean and population standard deviation") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const auto ms = mean_std(v);
  CHECK(ms.mean == 5.0);
  CHECK(ms.stddev == 2.0);
  const std::vector<double> one{0.3};
  CHECK(mean_std(one).stddev == 0.0);
}

TEST_CASE("ten-fold accuracy summary") {
  const std::vector<double> acc{0.995, 0.984, 0.992, 0.991, 0.983, 0.992, 0.994, 0.988, 0.997, 0.985};
  const auto ms = mean_std(acc);
  CHECK(format_metric(ms.mean) == "0.990");
  CHECK(ms.stddev == doctest::Approx(0.0046141088).epsilon(1e-8));
}

TEST_CASE("report rendering") {
  const auto cm = from_rows({{8, 2}, {3, 7}});
  const std::vector<std::uint32_t> y{0, 0, 1, 1};
  const std::vector<double> p{0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8};
  const auto r = classification_report(cm, y, p);
  const auto text = r.to_text({"neg", "pos"});
  CHECK(text.find("macro avg") != std::string::npos);
  CHECK(text.find("0.727") != std::string::npos);
  CHECK(text.find("macro OVR AUC 1.000") != std::string::npos);
  const auto json = r.to_json({"neg", "pos"});
  CHECK(json.find("\"auc_macro_ovr\": 1.0") != std::string::npos);
  CHECK(format_metric(0.9995) == "1.000");
  CHECK(format_metric(0.0) == "0.000");
}
