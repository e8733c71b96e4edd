#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pvfd/datagen.hpp"
#include "pvfd/detector.hpp"

namespace pvfd::evaluation {

struct ScoredSample {
  std::uint32_t prosumer_id = 0;
  std::uint32_t day_index = 0;
  double fraud_score = 0.0;  // in [0, 1]
  int true_label = 0;
};

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

struct ConfusionMetrics {
  double acc = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  Confusion counts;
};

// F1 and MCC from counts; zero denominators give 0.
double f1_score(const Confusion& c);
double mcc(const Confusion& c);

// Predicted fraud when score >= threshold. Throws std::invalid_argument on an
// empty set or an out-of-range score.
ConfusionMetrics confusion_metrics(std::span<const ScoredSample> samples, double threshold = 0.5);

// Mann-Whitney AUC, ties count one half. Throws std::invalid_argument unless
// both classes are present.
double auc(std::span<const ScoredSample> samples);

struct BudgetMetrics {
  double precision = 0.0;
  double fpr = 0.0;
  std::size_t alerts = 0;
};

// ceil(n * budget / 1000) alerts, ranked by (score desc, prosumer, day).
BudgetMetrics budget_metrics(std::span<const ScoredSample> samples,
                             double budget_per_thousand = 5.0);

struct MetricsReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::string scope;  // "pooled" or "community-<id>"
  double acc = 0.0, auc = 0.0, f1 = 0.0, mcc = 0.0;
  double precision_at_budget = 0.0, fpr_at_budget = 0.0;
  Confusion counts;
  std::size_t samples = 0;
};

// AUC is NaN when only one class is present.
MetricsReport make_report(std::span<const ScoredSample> samples, std::string mode,
                          std::uint64_t seed, std::string scope,
                          double budget_per_thousand = 5.0);

std::string reports_csv(std::span<const MetricsReport> reports);

std::vector<ScoredSample> score_days(const detector::Detector& model,
                                     std::span<const double> params,
                                     std::span<const datagen::ProsumerDay> days);

// prosumer_id,day,date,probability,truth for one prosumer's days, ordered by day.
std::string export_daily_probabilities(const detector::Detector& model,
                                       std::span<const double> params,
                                       std::uint32_t prosumer_id,
                                       std::span<const datagen::ProsumerDay> days);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator
  double median = 0.0;
};

// Per metric name (acc, auc, f1, mcc, precision_at_budget, fpr_at_budget).
// Throws std::invalid_argument with fewer than two reports.
std::map<std::string, Stat> summarize_seeds(std::span<const MetricsReport> reports);

Stat summarize(std::span<const double> values);

}  // namespace pvfd::evaluation
