#include "pvfd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pvfd::evaluation {

double f1_score(const Confusion& c) {
  const std::size_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

double mcc(const Confusion& c) {
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  const double den = d(c.tp + c.fp) * d(c.tp + c.fn) * d(c.tn + c.fp) * d(c.tn + c.fn);
  if (den == 0.0) return 0.0;
  return (d(c.tp) * d(c.tn) - d(c.fp) * d(c.fn)) / std::sqrt(den);
}

namespace {

void check_score(const ScoredSample& s) {
  if (!(s.fraud_score >= 0.0 && s.fraud_score <= 1.0)) {
    throw std::invalid_argument("score for prosumer " + std::to_string(s.prosumer_id) + " day " +
                                std::to_string(s.day_index) + " is outside [0, 1]");
  }
  if (s.true_label != 0 && s.true_label != 1) throw std::invalid_argument("label must be 0 or 1");
}

}  // namespace

ConfusionMetrics confusion_metrics(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw std::invalid_argument("confusion_metrics: no samples");
  ConfusionMetrics m;
  auto& c = m.counts;
  for (const auto& s : samples) {
    check_score(s);
    const bool predicted = s.fraud_score >= threshold;
    if (s.true_label == 1) {
      ++(predicted ? c.tp : c.fn);
    } else {
      ++(predicted ? c.fp : c.tn);
    }
  }
  m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(samples.size());
  m.f1 = f1_score(c);
  m.mcc = mcc(c);
  return m;
}

double auc(std::span<const ScoredSample> samples) {
  std::vector<std::pair<double, int>> v;
  v.reserve(samples.size());
  std::size_t pos = 0;
  for (const auto& s : samples) {
    check_score(s);
    v.emplace_back(s.fraud_score, s.true_label);
    pos += s.true_label == 1;
  }
  const std::size_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: both classes must be present");
  std::sort(v.begin(), v.end());
  // Rank sum of positives with average ranks over ties (ranks from 1).
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t positives = 0;
    while (j < v.size() && v[j].first == v[i].first) positives += v[j++].second == 1;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid * static_cast<double>(positives);
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

BudgetMetrics budget_metrics(std::span<const ScoredSample> samples, double budget_per_thousand) {
  BudgetMetrics b;
  if (samples.empty()) return b;
  std::vector<const ScoredSample*> ranked;
  std::size_t normals = 0;
  for (const auto& s : samples) {
    check_score(s);
    ranked.push_back(&s);
    normals += s.true_label == 0;
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredSample* a, const ScoredSample* c) {
    if (a->fraud_score != c->fraud_score) return a->fraud_score > c->fraud_score;
    if (a->prosumer_id != c->prosumer_id) return a->prosumer_id < c->prosumer_id;
    return a->day_index < c->day_index;
  });
  const double exact = static_cast<double>(samples.size()) * budget_per_thousand / 1000.0;
  b.alerts = std::min(samples.size(), static_cast<std::size_t>(std::ceil(exact - 1e-9)));
  std::size_t frauds = 0;
  for (std::size_t i = 0; i < b.alerts; ++i) frauds += ranked[i]->true_label == 1;
  if (b.alerts > 0) b.precision = static_cast<double>(frauds) / static_cast<double>(b.alerts);
  if (normals > 0) b.fpr = static_cast<double>(b.alerts - frauds) / static_cast<double>(normals);
  return b;
}

MetricsReport make_report(std::span<const ScoredSample> samples, std::string mode,
                          std::uint64_t seed, std::string scope, double budget_per_thousand) {
  MetricsReport r;
  r.mode = std::move(mode);
  r.seed = seed;
  r.scope = std::move(scope);
  r.samples = samples.size();
  const auto cm = confusion_metrics(samples);
  r.acc = cm.acc;
  r.f1 = cm.f1;
  r.mcc = cm.mcc;
  r.counts = cm.counts;
  const bool both = cm.counts.tp + cm.counts.fn > 0 && cm.counts.tn + cm.counts.fp > 0;
  r.auc = both ? auc(samples) : std::numeric_limits<double>::quiet_NaN();
  const auto b = budget_metrics(samples, budget_per_thousand);
  r.precision_at_budget = b.precision;
  r.fpr_at_budget = b.fpr;
  return r;
}

std::string reports_csv(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  out << "mode,seed,scope,samples,acc,auc,f1,mcc,precision_at_budget,fpr_at_budget,tp,tn,fp,fn\n";
  char buf[320];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%zu,%zu\n",
                  r.mode.c_str(), static_cast<unsigned long long>(r.seed), r.scope.c_str(),
                  r.samples, r.acc, r.auc, r.f1, r.mcc, r.precision_at_budget, r.fpr_at_budget,
                  r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn);
    out << buf;
  }
  return out.str();
}

std::vector<ScoredSample> score_days(const detector::Detector& model,
                                     std::span<const double> params,
                                     std::span<const datagen::ProsumerDay> days) {
  const auto& c = model.config();
  std::vector<detector::WindowedInput> inputs;
  inputs.reserve(days.size());
  for (const auto& d : days) {
    inputs.push_back(detector::segment_day(d.pvg_reported, d.irr, c.window, c.stride));
  }
  std::vector<ScoredSample> out;
  out.reserve(days.size());
  constexpr std::size_t kChunk = 64;
  std::vector<const detector::WindowedInput*> batch;
  for (std::size_t start = 0; start < days.size(); start += kChunk) {
    batch.clear();
    const std::size_t end = std::min(days.size(), start + kChunk);
    for (std::size_t i = start; i < end; ++i) batch.push_back(&inputs[i]);
    const auto preds = model.predict(params, batch);
    for (std::size_t i = start; i < end; ++i) {
      out.push_back({days[i].prosumer_id, days[i].day_index,
                     std::clamp(preds[i - start].prob_fraud, 0.0, 1.0), days[i].label});
    }
  }
  return out;
}

std::string export_daily_probabilities(const detector::Detector& model,
                                       std::span<const double> params, std::uint32_t prosumer_id,
                                       std::span<const datagen::ProsumerDay> days) {
  std::vector<datagen::ProsumerDay> mine;
  for (const auto& d : days) {
    if (d.prosumer_id == prosumer_id) mine.push_back(d);
  }
  std::sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) {
    return a.day_index < b.day_index;
  });
  const auto scored = score_days(model, params, mine);
  std::ostringstream out;
  out << "prosumer_id,day,date,probability,truth\n";
  char buf[128];
  for (const auto& s : scored) {
    std::snprintf(buf, sizeof buf, "%u,%u,%s,%.17g,%d\n", s.prosumer_id, s.day_index,
                  datagen::date_of(s.day_index).c_str(), s.fraud_score, s.true_label);
    out << buf;
  }
  return out.str();
}

Stat summarize(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("summarize: need at least two values");
  Stat s;
  const double n = static_cast<double>(values.size());
  for (const double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (const double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / (n - 1.0));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

std::map<std::string, Stat> summarize_seeds(std::span<const MetricsReport> reports) {
  if (reports.size() < 2) throw std::invalid_argument("summarize_seeds: need at least two reports");
  const std::pair<const char*, double MetricsReport::*> fields[] = {
      {"acc", &MetricsReport::acc},
      {"auc", &MetricsReport::auc},
      {"f1", &MetricsReport::f1},
      {"mcc", &MetricsReport::mcc},
      {"precision_at_budget", &MetricsReport::precision_at_budget},
      {"fpr_at_budget", &MetricsReport::fpr_at_budget}};
  std::map<std::string, Stat> out;
  std::vector<double> values;
  for (const auto& [name, member] : fields) {
    values.clear();
    for (const auto& r : reports) values.push_back(r.*member);
    out[name] = summarize(values);
  }
  return out;
}

}  // namespace pvfd::evaluation
