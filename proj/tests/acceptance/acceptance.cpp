// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--only N[,N...]] [--jobs J] [--keep DIR]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fraud_props.hpp"
#include "oracles.hpp"
#include "primitive_gradcheck.hpp"
#include "pvfd/datagen.hpp"
#include "pvfd/detector.hpp"
#include "pvfd/evaluation.hpp"
#include "pvfd/federation.hpp"
#include "pvfd/grad_check.hpp"
#include "pvfd/harness.hpp"

using namespace pvfd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("violated: " + what);
    }
  }
  void note(std::string s) { notes.push_back(std::move(s)); }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. gradients

detector::DetectorConfig tiny_detector() {
  detector::DetectorConfig c;
  c.slots = 8;
  c.window = 4;
  c.stride = 2;
  c.d_lstm = c.d_cnn_lstm = c.d_sa = c.d_ca = 4;
  c.heads = 2;
  c.conv_channels = 2;
  c.mlp_hidden = 5;
  return c;
}

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(2024);
  for (const auto& family : testing::primitive_families()) {
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      worst = std::max(worst, testing::check_trial(family.make(rng), rng).worst_relative_error);
    }
    v.require(worst < 1e-4, family.name + " worst relative error " + fmt("%.3g", worst));
  }

  // Full detector loss (CE + prototype term, lambda = 1) on one prosumer's
  // normal and fraudulent day.
  const auto c = tiny_detector();
  const detector::Detector model(c);
  double worst = 0.0, worst_fine = 0.0;
  std::size_t coords = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<detector::Sample> data;
    for (int label : {detector::kNormal, detector::kFraud}) {
      std::vector<double> pvg(c.slots);
      for (auto& x : pvg) x = rng.uniform(0.0, 3.0);
      data.push_back({detector::segment_day(pvg, testing::random_tensor({c.slots, 3}, rng, 0.0, 800.0),
                                            c.window, c.stride),
                      label});
    }
    std::vector<const detector::Sample*> batch{&data[0], &data[1]};
    detector::GlobalPrototypes global;
    for (int k = 0; k < 2; ++k) {
      std::vector<double> g(c.embedding_dim());
      for (auto& x : g) x = rng.uniform(-1.0, 1.0);
      global[k] = g;
    }
    Rng base(700 + trial), head(800 + trial);
    const auto params = model.init_params(base, head);
    auto f = [&](std::span<const double> x) {
      return detector::evaluate_batch(model, x, batch, &global, 1.0).loss;
    };
    auto g = [&](std::span<const double> x) {
      return detector::evaluate_batch(model, x, batch, &global, 1.0).gradient;
    };
    const auto r = grad_check(f, g, params, 1e-3, 1e-4, {}, testing::kFdFloor);
    worst = std::max(worst, r.worst_relative_error);
    coords += r.checked;
    // Diagnostic only: a smaller step separates truncation error from a wrong gradient.
    if (!r.passed) {
      const auto fine = grad_check(f, g, params, 1e-4, 1e-4, {}, testing::kFdFloor);
      worst_fine = std::max(worst_fine, fine.worst_relative_error);
      v.note("trial " + std::to_string(trial) + ": coordinate " + std::to_string(r.worst_index) +
             " analytic " + fmt("%.6g", r.analytic_at_worst) + " numeric " + fmt("%.6g", r.numeric_at_worst) +
             "; at eps 1e-4 worst " + fmt("%.2g", fine.worst_relative_error));
    }
  }
  v.require(worst < 1e-4, "detector loss worst relative error " + fmt("%.3g", worst));
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt("%.1f s", secs) + " < 60 s");
  v.note(std::to_string(testing::primitive_families().size()) + " primitives x 20 trials, detector 20 trials / " +
         std::to_string(coords) + " coordinates, worst detector error " + fmt("%.2g", worst) + ", " +
         fmt("%.1f s", secs));
  return v;
}

// ---------------------------------------------------------------------------
// 2. fraud functions

Verdict fraud_functions() {
  Verdict v;
  const auto t0 = Clock::now();
  datagen::DatagenConfig c;
  c.communities = 5;
  c.prosumers_per_community = 10;
  c.days = 120;
  c.fraud_rate = 0.6;
  c.test_share = 1.0;
  const auto data = datagen::build_communities(c, 99);
  auto scan = testing::scan_dataset(data);
  Rng rng(5);
  testing::scan_type3_conservation(data, rng, scan);
  for (std::size_t i = 0; i < std::min<std::size_t>(scan.violations.size(), 5); ++i) {
    v.require(false, scan.violations[i]);
  }
  for (int t = 1; t <= 3; ++t) {
    v.require(scan.days[t] >= 1000, "type " + std::to_string(t) + " days " + std::to_string(scan.days[t]) +
                                        " >= 1000");
  }
  v.require(scan.type3_conservation_checked >= 1000, "type 3 conservation checks >= 1000");
  v.require(scan.worst_conservation <= 1e-9, "conservation within 1e-9");
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt("%.1f s", secs) + " < 60 s");
  v.note("days by type " + std::to_string(scan.days[1]) + "/" + std::to_string(scan.days[2]) + "/" +
         std::to_string(scan.days[3]) + ", conservation checks " +
         std::to_string(scan.type3_conservation_checked) + " worst " +
         fmt("%.2g", scan.worst_conservation) + ", " + fmt("%.1f s", secs));
  return v;
}

// ---------------------------------------------------------------------------
// 3. aggregation

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Verdict aggregation() {
  Verdict v;
  Rng rng(33);
  double worst_base = 0.0, worst_proto = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6), len = 1 + rng.below(50);
    std::vector<federation::UplinkMessage> ups(n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      ups[i].params = random_vec(len, rng);
      w[i] = static_cast<double>(1 + rng.below(500));
    }
    const auto got = federation::aggregate_base(ups, w);
    for (std::size_t j = 0; j < len; ++j) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = n; i-- > 0;) {
        num += w[i] * ups[i].params[j];
        den += w[i];
      }
      worst_base = std::max(worst_base, std::abs(got[j] - num / den));
    }
  }
  for (int trial = 0; trial < 100; ++trial) {
    // Local prototypes from raw embeddings, then the global mean; compare with
    // the per-sample mean over the pooled embeddings.
    const std::size_t n = 1 + rng.below(5), dim = 1 + rng.below(16);
    std::vector<federation::UplinkMessage> ups(n);
    std::vector<std::vector<double>> sum(2, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> count(2, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::vector<double>> emb;
      std::vector<int> labels;
      const std::size_t m = 1 + rng.below(40);
      for (std::size_t s = 0; s < m; ++s) {
        emb.push_back(random_vec(dim, rng));
        labels.push_back(rng.uniform() < 0.25 ? 1 : 0);
        for (std::size_t j = 0; j < dim; ++j) sum[labels.back()][j] += emb.back()[j];
        ++count[labels.back()];
      }
      for (const auto& [k, p] : detector::compute_local_prototypes(emb, labels)) {
        ups[i].prototypes[k] = {p.mean, p.count};
      }
    }
    const auto global = federation::aggregate_prototypes(ups);
    for (int k = 0; k < 2; ++k) {
      if (count[k] == 0) {
        v.require(global.count(k) == 0, "absent class stays absent");
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) {
        worst_proto = std::max(worst_proto,
                               std::abs(global.at(k)[j] - sum[k][j] / static_cast<double>(count[k])));
      }
    }
  }
  v.require(worst_base <= 1e-12, "aggregate_base within 1e-12 (" + fmt("%.2g", worst_base) + ")");
  v.require(worst_proto <= 1e-12, "pooled-mean identity within 1e-12 (" + fmt("%.2g", worst_proto) + ")");
  v.note("100 + 100 instances, worst base " + fmt("%.2g", worst_base) + ", worst prototype " +
         fmt("%.2g", worst_proto));
  return v;
}

// ---------------------------------------------------------------------------
// 4. protocol determinism and privacy surface

detector::DetectorConfig small_detector() {
  detector::DetectorConfig c;
  c.d_lstm = c.d_cnn_lstm = c.d_sa = c.d_ca = 4;
  c.heads = 2;
  c.conv_channels = 2;
  c.mlp_hidden = 5;
  return c;
}

Verdict protocol() {
  Verdict v;
  const detector::Detector model(small_detector());
  datagen::DatagenConfig dc;
  dc.communities = 3;
  dc.prosumers_per_community = 3;
  dc.days = 12;
  dc.fraud_rate = 0.3;
  const auto data = datagen::build_communities(dc, 21);
  const auto clients = federation::client_data(data, model.config());

  std::size_t messages = 0;
  for (const auto mode : {federation::Mode::kLocalOnly, federation::Mode::kFedAvg,
                          federation::Mode::kProposed}) {
    const std::string name(federation::mode_name(mode));
    // (round, community, direction) -> bytes
    using Wire = std::map<std::tuple<std::size_t, std::size_t, bool>, federation::Bytes>;
    auto run = [&](std::vector<std::size_t> order, Wire& wire, std::vector<std::string>& leaks,
                   std::size_t& observed) {
      federation::FederationConfig f;
      f.mode = mode;
      f.rounds = 3;
      f.train = {0.05, 8, 1.0};
      f.seed = 5;
      f.client_order = std::move(order);
      std::size_t round = 1, seen = 0;
      f.observer = [&](const federation::Bytes& b, bool up, std::size_t i) {
        wire[{round, i, up}] = b;
        observed += federation::transmitted_parameters(b);
        for (auto& s : federation::privacy_scan(b, data.communities[i].train)) leaks.push_back(s);
        for (auto& s : federation::privacy_scan(b, data.communities[i].test)) leaks.push_back(s);
        // Each round emits one uplink and one downlink per community.
        if (++seen == 2 * clients.size()) {
          seen = 0;
          ++round;
        }
      };
      return federation::run_training(model, clients, f);
    };
    Wire wa, wb;
    std::vector<std::string> la, lb;
    std::size_t oa = 0, ob = 0;
    const auto ra = run({}, wa, la, oa);
    const auto rb = run({2, 0, 1}, wb, lb, ob);
    v.require(wa == wb, name + ": permuted client order emits identical messages");
    v.require(federation::round_log_csv(ra.logs) == federation::round_log_csv(rb.logs),
              name + ": identical round logs");
    v.require(ra.models == rb.models, name + ": identical final models");
    v.require(la.empty() && lb.empty(), name + ": no raw series in any message" +
                                            (la.empty() ? std::string() : " (" + la.front() + ")"));
    std::size_t logged = 0;
    for (const auto& log : ra.logs) {
      v.require(log.tx_total == log.tx_expected,
                name + " round " + std::to_string(log.round) + ": measured " +
                    std::to_string(log.tx_total) + " == accounted " + std::to_string(log.tx_expected));
      logged += log.tx_total;
    }
    v.require(ra.logs.size() == 3, name + ": 3 rounds");
    v.require(oa == logged, name + ": observed parameters equal logged");
    messages += wa.size();
  }
  v.note("3 modes x 3 rounds x 3 communities, " + std::to_string(messages) +
         " messages compared byte for byte");
  return v;
}

// ---------------------------------------------------------------------------
// 5. metric oracles

Verdict metrics() {
  using namespace evaluation;
  Verdict v;
  std::size_t matrices = 0;
  for (std::size_t tp = 0; tp <= 5; ++tp)
    for (std::size_t tn = 0; tn <= 5; ++tn)
      for (std::size_t fp = 0; fp <= 5; ++fp)
        for (std::size_t fn = 0; fn <= 5; ++fn) {
          ++matrices;
          // Build the scored set realizing this matrix and recompute from scratch.
          std::vector<ScoredSample> s;
          std::uint32_t id = 0;
          auto add = [&](std::size_t n, double score, int label) {
            for (std::size_t i = 0; i < n; ++i) s.push_back({id, id, score, label}), ++id;
          };
          add(tp, 0.9, 1);
          add(tn, 0.1, 0);
          add(fp, 0.8, 0);
          add(fn, 0.2, 1);
          const double dtp = static_cast<double>(tp), dtn = static_cast<double>(tn),
                       dfp = static_cast<double>(fp), dfn = static_cast<double>(fn);
          const double den = (dtp + dfp) * (dtp + dfn) * (dtn + dfp) * (dtn + dfn);
          const double mcc_ref = den == 0.0 ? 0.0 : (dtp * dtn - dfp * dfn) / std::sqrt(den);
          const double f1_ref = (2 * tp + fp + fn) == 0 ? 0.0 : 2 * dtp / (2 * dtp + dfp + dfn);
          if (s.empty()) continue;
          const auto m = confusion_metrics(s);
          v.require(m.counts.tp == tp && m.counts.tn == tn && m.counts.fp == fp && m.counts.fn == fn,
                    "confusion counts");
          v.require(std::abs(m.mcc - mcc_ref) <= 1e-12, "mcc brute force");
          v.require(std::abs(m.f1 - f1_ref) <= 1e-12, "f1 brute force");
          v.require(std::abs(m.acc - (dtp + dtn) / static_cast<double>(s.size())) <= 1e-12, "acc");
          v.require(m.mcc >= -1.0 && m.mcc <= 1.0, "mcc in [-1, 1]");
          const bool diagonal = fp == 0 && fn == 0 && tp > 0 && tn > 0;
          v.require((m.mcc == 1.0) == diagonal, "mcc = 1 exactly on diagonal matrices");
        }

  Rng rng(55);
  double worst_auc = 0.0, worst_cubed = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(80);
    std::vector<ScoredSample> s;
    for (std::size_t i = 0; i < n; ++i) {
      double score = rng.uniform();
      if (trial % 2 == 0) score = std::round(score * 10.0) / 10.0;  // ties
      s.push_back({static_cast<std::uint32_t>(rng.below(9)), static_cast<std::uint32_t>(i), score,
                   rng.uniform() < 0.3 ? 1 : 0});
    }
    s[0].true_label = 0;
    s[1].true_label = 1;
    double wins = 0.0, pairs = 0.0;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (const auto& p : s) {
      const bool pred = p.fraud_score >= 0.5;
      if (p.true_label == 1) (pred ? tp : fn)++;
      else (pred ? fp : tn)++;
      if (p.true_label != 1) continue;
      for (const auto& q : s) {
        if (q.true_label != 0) continue;
        pairs += 1.0;
        wins += p.fraud_score > q.fraud_score ? 1.0 : p.fraud_score == q.fraud_score ? 0.5 : 0.0;
      }
    }
    const double a = auc(s);
    worst_auc = std::max(worst_auc, std::abs(a - wins / pairs));
    auto cubed = s;
    for (auto& x : cubed) x.fraud_score = x.fraud_score * x.fraud_score * x.fraud_score;
    worst_cubed = std::max(worst_cubed, std::abs(auc(cubed) - a));
    const auto m = confusion_metrics(s);
    v.require(m.counts.tp == tp && m.counts.tn == tn && m.counts.fp == fp && m.counts.fn == fn,
              "random-set confusion counts");
    v.require(std::abs(m.mcc - mcc(Confusion{tp, tn, fp, fn})) <= 1e-12, "random-set mcc");
  }
  v.require(worst_auc <= 1e-12, "auc vs pairwise count (" + fmt("%.2g", worst_auc) + ")");
  v.require(worst_cubed <= 1e-12, "auc under x^3 (" + fmt("%.2g", worst_cubed) + ")");
  v.note(std::to_string(matrices) + " matrices, 100 random sets, worst auc " + fmt("%.2g", worst_auc) +
         ", x^3 drift " + fmt("%.2g", worst_cubed));
  return v;
}

// ---------------------------------------------------------------------------
// 6. desk-scale ordering

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Verdict desk_ordering(std::size_t jobs, const fs::path& keep) {
  Verdict v;
  const auto t0 = Clock::now();
  const std::vector<double> rates{0.15, 0.05};
  const std::vector<federation::Mode> modes{federation::Mode::kLocalOnly, federation::Mode::kFedAvg,
                                            federation::Mode::kProposed};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  struct Task {
    harness::ExperimentConfig config;
  };
  std::vector<Task> tasks;
  for (const double rate : rates)
    for (const auto mode : modes)
      for (const auto seed : seeds) {
        auto c = harness::desk_preset();
        c.data.fraud_rate = rate;
        c.mode = mode;
        c.seed = seed;
        c.output_dir = keep.empty() ? fs::path("unused") : keep / ("rate-" + fmt("%g", rate));
        tasks.push_back({c});
      }
  std::vector<evaluation::MetricsReport> pooled(tasks.size());
  std::vector<bool> diverged(tasks.size(), false);
  harness::parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    harness::RunOptions opt;
    opt.write_artifacts = !keep.empty();
    const auto r = harness::run_experiment(tasks[i].config, opt);
    pooled[i] = r.reports.back();
    diverged[i] = r.manifest.diverged;
  });
  const double secs = seconds_since(t0);

  std::map<std::pair<double, federation::Mode>, std::pair<double, double>> med;  // (auc, f1)
  for (const double rate : rates) {
    for (const auto mode : modes) {
      std::vector<double> aucs, f1s;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].config.data.fraud_rate != rate || tasks[i].config.mode != mode) continue;
        aucs.push_back(pooled[i].auc);
        f1s.push_back(pooled[i].f1);
        v.require(!diverged[i], std::string(federation::mode_name(mode)) + " seed " +
                                    std::to_string(tasks[i].config.seed) + " trained without divergence");
      }
      med[{rate, mode}] = {median(aucs), median(f1s)};
      v.note(fmt("rate %.2f ", rate) + std::string(federation::mode_name(mode)) + ": median auc " +
             fmt("%.4f", med[{rate, mode}].first) + " f1 " + fmt("%.4f", med[{rate, mode}].second));
    }
  }
  using federation::Mode;
  const auto f1 = [&](double r, Mode m) { return med[{r, m}].second; };
  v.require(med[{0.15, Mode::kProposed}].first >= 0.80, "pooled AUC(proposed) >= 0.80 at 15%");
  v.require(f1(0.15, Mode::kProposed) >= f1(0.15, Mode::kFedAvg), "F1(proposed) >= F1(fedavg) at 15%");
  v.require(f1(0.15, Mode::kFedAvg) >= f1(0.15, Mode::kLocalOnly), "F1(fedavg) >= F1(local-only) at 15%");
  for (const auto mode : modes) {
    v.require(f1(0.15, mode) > f1(0.05, mode),
              std::string("F1 at 15% > F1 at 5% for ") + std::string(federation::mode_name(mode)));
  }
  v.require(secs < 900.0, "runtime " + fmt("%.0f s", secs) + " < 900 s");
  v.note(std::to_string(tasks.size()) + " runs on " + std::to_string(jobs) + " thread(s), " +
         fmt("%.0f s", secs));
  return v;
}

// ---------------------------------------------------------------------------
// 7. round-1 regularizer

Verdict round_one() {
  Verdict v;
  const detector::Detector model(small_detector());
  datagen::DatagenConfig dc;
  dc.communities = 2;
  dc.prosumers_per_community = 3;
  dc.days = 12;
  dc.fraud_rate = 0.3;
  const auto data = datagen::build_communities(dc, 17);
  const auto clients = federation::client_data(data, model.config());

  federation::FederationConfig f;
  f.mode = federation::Mode::kProposed;
  f.rounds = 1;
  f.train = {0.05, 8, 1.0};
  f.seed = 11;
  auto state = federation::initial_state(model, f.mode, clients.size(), f.seed);
  const auto theta0 = state.local[0];
  const auto log = federation::run_round(model, clients, f, state, 1);

  // Same epoch with the regularizer switched off by hand.
  auto theta = theta0;
  auto opts = f.train;
  opts.lambda = 0.0;
  const auto pure = detector::train_epoch(model, theta, clients[0].train, opts, nullptr,
                                          derive_seed(f.seed, SeedStream::kShuffle,
                                                      clients[0].community_id, 1));
  for (std::size_t i = 0; i < clients.size(); ++i) {
    v.require(log.loss[i] == log.cross_entropy[i],
              "community " + std::to_string(i) + " round-1 loss equals its CE term bitwise");
  }
  v.require(log.loss[0] == pure.loss, "round-1 loss equals a lambda = 0 epoch bitwise");
  v.require(federation::split_params(model.layout(), theta).base ==
                federation::split_params(model.layout(), state.local[0]).base,
            "round-1 parameters equal a lambda = 0 epoch bitwise");
  v.note("loss " + fmt("%.17g", log.loss[0]) + " (lambda = 1, seed 11)");
  return v;
}

// ---------------------------------------------------------------------------
// 8. reproducibility

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict reproducibility(const fs::path& scratch) {
  Verdict v;
  auto c = harness::desk_preset();
  c.data.prosumers_per_community = 3;
  c.data.days = 24;
  c.rounds = 3;
  c.seed = 8;
  std::size_t files = 0;
  for (const auto mode : {federation::Mode::kLocalOnly, federation::Mode::kFedAvg,
                          federation::Mode::kProposed}) {
    c.mode = mode;
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      harness::RunOptions opt;
      opt.directory = scratch / (std::string(federation::mode_name(mode)) + "-" + std::to_string(rep));
      const auto r = harness::run_experiment(c, opt);
      const auto bytes = slurp(r.manifest.metrics_path);
      ++files;
      if (rep == 0) {
        first = bytes;
      } else {
        v.require(!first.empty() && bytes == first,
                  std::string(federation::mode_name(mode)) + ": metrics CSVs byte-identical");
      }
    }
  }
  v.note(std::to_string(files) + " metrics files from 3 modes x 2 runs");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string only;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string keep;
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--jobs", jobs, "threads for the desk-scale runs");
  app.add_option("--keep", keep, "write desk-scale run artifacts under this directory");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  std::stringstream in(only);
  for (std::string part; std::getline(in, part, ',');) selected.insert(std::stoi(part));

  const fs::path scratch = fs::temp_directory_path() / "pvfd-acceptance";
  fs::remove_all(scratch);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient suite", gradients},
      {"fraud-function suite", fraud_functions},
      {"aggregation equivalence", aggregation},
      {"protocol determinism and privacy surface", protocol},
      {"metric oracles", metrics},
      {"desk-scale ordering reproduction", [&] { return desk_ordering(jobs, keep); }},
      {"round-1 regularizer inertness", round_one},
      {"reproducibility", [&] { return reproducibility(scratch); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(number)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.notes.push_back(std::string("exception: ") + e.what());
    }
    all = all && v.pass;
    std::printf("CRITERION %d %s %s\n", number, v.pass ? "PASS" : "FAIL", criteria[i].first);
    for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch);
  return all ? 0 : 1;
}
