#include "pvfd/harness.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pvfd/error.hpp"

namespace pvfd::harness {

namespace fs = std::filesystem;
using evaluation::MetricsReport;

namespace {

std::string format(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256 init failed");
    }
  }

  void bytes(const void* p, std::size_t n) { EVP_DigestUpdate(ctx_.get(), p, n); }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }

  void values(std::span<const double> v) {
    u64(v.size());
    for (const double x : v) u64(std::bit_cast<std::uint64_t>(x));
  }

  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &n);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < n; ++i) {
      out += digits[md[i] >> 4];
      out += digits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

fs::path default_directory(const ExperimentConfig& c) {
  return c.output_dir / (std::string(federation::mode_name(c.mode)) + "-seed" + std::to_string(c.seed));
}

}  // namespace

std::string dataset_digest(const datagen::Dataset& data) {
  Sha256 h;
  for (const auto& com : data.communities) {
    h.u64(com.community_id);
    for (const auto* split : {&com.train, &com.test}) {
      h.u64(split->size());
      for (const auto& d : *split) {
        h.u64(d.prosumer_id);
        h.u64(d.day_index);
        h.u64(static_cast<std::uint64_t>(d.label));
        h.u64(static_cast<std::uint64_t>(d.fraud_type));
        h.values(d.pvg_reported);
        h.values(d.pvg_actual);
        h.values(d.irr.data());
      }
    }
  }
  return h.hex();
}

std::vector<fs::path> RunManifest::files() const {
  std::vector<fs::path> out{config_path, dataset_path, rounds_path, metrics_path};
  out.insert(out.end(), model_paths.begin(), model_paths.end());
  out.push_back(manifest_path);
  return out;
}

std::string RunManifest::json() const {
  nlohmann::ordered_json j;
  j["config"] = config;
  j["dataset_digest"] = dataset_digest;
  j["rounds_completed"] = rounds_completed;
  j["diverged"] = diverged;
  j["divergence"] = divergence;
  j["wall_clock_seconds"] = wall_clock_seconds;
  auto rel = [&](const fs::path& p) { return p.lexically_relative(directory).generic_string(); };
  j["files"] = {{"config", rel(config_path)},     {"dataset", rel(dataset_path)},
                {"rounds", rel(rounds_path)},     {"metrics", rel(metrics_path)},
                {"manifest", rel(manifest_path)}, {"models", nlohmann::ordered_json::array()}};
  for (const auto& m : model_paths) j["files"]["models"].push_back(rel(m));
  return j.dump(1) + "\n";
}

std::string params_csv(std::span<const double> params) {
  std::string out = "value\n";
  char buf[32];
  for (const double v : params) {
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
    out += '\n';
  }
  return out;
}

std::vector<double> read_params(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "value") {
    throw ParseError(path.string() + " line 1: expected header 'value'");
  }
  std::vector<double> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || end != line.data() + line.size()) {
      throw ParseError(path.string() + " line " + std::to_string(n) + ": bad value '" + line + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<MetricsReport> evaluate_models(const ExperimentConfig& config,
                                           const datagen::Dataset& data,
                                           std::span<const std::vector<double>> models) {
  if (models.size() != data.communities.size()) {
    throw ConfigError("evaluate_models: one model per community required");
  }
  const detector::Detector model(config.model);
  const std::string mode(federation::mode_name(config.mode));
  std::vector<MetricsReport> reports;
  std::vector<evaluation::ScoredSample> pooled;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& com = data.communities[i];
    const auto scored = evaluation::score_days(model, models[i], com.test);
    reports.push_back(evaluation::make_report(scored, mode, config.seed,
                                              "community-" + std::to_string(com.community_id),
                                              config.budget_per_thousand));
    pooled.insert(pooled.end(), scored.begin(), scored.end());
  }
  reports.push_back(
      evaluation::make_report(pooled, mode, config.seed, "pooled", config.budget_per_thousand));
  return reports;
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const auto data = datagen::build_communities(config.data, config.seed);
  const detector::Detector model(config.model);
  const auto clients = federation::client_data(data, config.model);

  federation::FederationConfig fed;
  fed.mode = config.mode;
  fed.rounds = config.rounds;
  fed.train = config.train;
  fed.seed = config.seed;
  fed.client_order = options.client_order;
  const auto trained = federation::run_training(model, clients, fed);

  RunResult result;
  result.logs = trained.logs;
  result.reports = evaluate_models(config, data, trained.models);
  result.metrics_csv = evaluation::reports_csv(result.reports);
  result.rounds_csv = federation::round_log_csv(result.logs);

  auto& m = result.manifest;
  m.config = config_text(config);
  m.dataset_digest = dataset_digest(data);
  m.rounds_completed = trained.rounds_completed;
  m.diverged = trained.diverged;
  m.divergence = trained.divergence;
  m.directory = options.directory.empty() ? default_directory(config) : options.directory;
  m.config_path = m.directory / "config.ini";
  m.dataset_path = m.directory / "dataset.json";
  m.rounds_path = m.directory / "rounds.csv";
  m.metrics_path = m.directory / "metrics.csv";
  m.manifest_path = m.directory / "manifest.json";
  for (const auto& com : data.communities) {
    m.model_paths.push_back(m.directory / "models" /
                            ("community-" + std::to_string(com.community_id) + ".csv"));
  }

  if (options.write_artifacts) {
    fs::create_directories(m.directory / "models");
    write_file(m.config_path, m.config);
    write_file(m.dataset_path, datagen::manifest_json(data));
    write_file(m.rounds_path, result.rounds_csv);
    write_file(m.metrics_path, result.metrics_csv);
    for (std::size_t i = 0; i < trained.models.size(); ++i) {
      write_file(m.model_paths[i], params_csv(trained.models[i]));
    }
  }
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (options.write_artifacts) write_file(m.manifest_path, m.json());
  return result;
}

RunResult evaluate_run(const fs::path& directory) {
  const auto manifest = nlohmann::json::parse(read_file(directory / "manifest.json"));
  const auto& files = manifest.at("files");
  const auto config = load_config(directory / files.at("config").get<std::string>());
  const auto data = datagen::build_communities(config.data, config.seed);
  const auto digest = dataset_digest(data);
  if (digest != manifest.at("dataset_digest").get<std::string>()) {
    throw ConfigError("evaluate: regenerated dataset digest " + digest +
                      " does not match the manifest");
  }
  std::vector<std::vector<double>> models;
  RunResult result;
  auto& m = result.manifest;
  m.directory = directory;
  for (const auto& f : files.at("models")) {
    m.model_paths.push_back(directory / f.get<std::string>());
    models.push_back(read_params(m.model_paths.back()));
  }
  const detector::Detector model(config.model);
  for (const auto& p : models) {
    if (p.size() != model.layout().total()) {
      throw DimensionError("evaluate: model file holds " + std::to_string(p.size()) +
                           " values, the configured detector needs " +
                           std::to_string(model.layout().total()));
    }
  }
  result.reports = evaluate_models(config, data, models);
  result.metrics_csv = evaluation::reports_csv(result.reports);
  m.config = config_text(config);
  m.dataset_digest = digest;
  m.config_path = directory / files.at("config").get<std::string>();
  m.dataset_path = directory / files.at("dataset").get<std::string>();
  m.rounds_path = directory / files.at("rounds").get<std::string>();
  m.metrics_path = directory / files.at("metrics").get<std::string>();
  m.manifest_path = directory / "manifest.json";
  m.rounds_completed = manifest.at("rounds_completed").get<std::size_t>();
  m.diverged = manifest.at("diverged").get<bool>();
  m.divergence = manifest.at("divergence").get<std::string>();
  m.wall_clock_seconds = manifest.at("wall_clock_seconds").get<double>();
  return result;
}

Axis axis_select(std::string_view name) {
  if (name == "fraud_rate") return Axis::kFraudRate;
  if (name == "N" || name == "communities") return Axis::kCommunities;
  if (name == "lambda") return Axis::kLambda;
  throw ConfigError("axis: unknown value '" + std::string(name) +
                    "' (expected fraud_rate, N or lambda)");
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::kFraudRate: return "fraud_rate";
    case Axis::kCommunities: return "N";
    case Axis::kLambda: return "lambda";
  }
  return "?";
}

ExperimentConfig with_axis(const ExperimentConfig& base, Axis axis, double value) {
  ExperimentConfig c = base;
  switch (axis) {
    case Axis::kFraudRate: c.data.fraud_rate = value; break;
    case Axis::kLambda: c.train.lambda = value; break;
    case Axis::kCommunities: {
      const std::size_t total = base.data.communities * base.data.prosumers_per_community;
      if (!(value >= 1.0) || value != std::floor(value)) {
        throw ConfigError("data.communities: sweep value " + format(value) +
                          " is not a positive integer");
      }
      const auto n = static_cast<std::size_t>(value);
      if (total % n != 0) {
        throw ConfigError("data.communities: total roster " + std::to_string(total) +
                          " is not divisible by N = " + std::to_string(n));
      }
      c.data.communities = n;
      c.data.prosumers_per_community = total / n;
      break;
    }
  }
  return c;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first) std::rethrow_exception(first);
}

SweepResult sweep(const ExperimentConfig& base, Axis axis, std::span<const double> values,
                  std::span<const federation::Mode> modes, std::size_t jobs,
                  bool write_artifacts) {
  if (values.empty()) throw ConfigError("sweep: no axis values");
  if (modes.empty()) throw ConfigError("sweep: no modes");
  const std::string name(axis_name(axis));
  // Validate every point before any training starts.
  std::vector<ExperimentConfig> configs;
  for (const double v : values) {
    for (const auto mode : modes) {
      try {
        auto c = with_axis(base, axis, v);
        c.mode = mode;
        c.validate();
        configs.push_back(std::move(c));
      } catch (const ConfigError& e) {
        throw ConfigError(name + "=" + format(v) + ": " + e.what());
      }
    }
  }

  SweepResult result;
  result.runs.resize(configs.size());
  parallel_for(configs.size(), jobs, [&](std::size_t i) {
    const double v = values[i / modes.size()];
    RunOptions opt;
    opt.write_artifacts = write_artifacts;
    opt.directory = base.output_dir / ("sweep-" + name + "-" + format(v)) /
                    (std::string(federation::mode_name(configs[i].mode)) + "-seed" +
                     std::to_string(configs[i].seed));
    try {
      result.runs[i] = run_experiment(configs[i], opt);
    } catch (const std::exception& e) {
      throw std::runtime_error(name + "=" + format(v) + ": " + e.what());
    }
  });

  std::ostringstream out;
  out << "axis,axis_value,mode,seed,scope,metric,value\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const std::string v = format(values[i / modes.size()]);
    for (const auto& r : result.runs[i].reports) {
      const std::pair<const char*, double> metrics[] = {
          {"acc", r.acc},   {"auc", r.auc}, {"f1", r.f1},
          {"mcc", r.mcc},   {"precision_at_budget", r.precision_at_budget},
          {"fpr_at_budget", r.fpr_at_budget}};
      for (const auto& [metric, value] : metrics) {
        out << name << ',' << v << ',' << r.mode << ',' << r.seed << ',' << r.scope << ','
            << metric << ',' << format(value) << '\n';
      }
    }
  }
  result.csv = out.str();
  return result;
}

std::vector<MetricsReport> parse_reports_csv(std::string_view text) {
  static const std::string header =
      "mode,seed,scope,samples,acc,auc,f1,mcc,precision_at_budget,fpr_at_budget,tp,tn,fp,fn";
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw ParseError("metrics line 1: unexpected header");
  }
  std::vector<MetricsReport> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 14) {
      throw ParseError("metrics line " + std::to_string(n) + ": expected 14 columns, found " +
                       std::to_string(cells.size()));
    }
    std::size_t col = 0;
    auto real = [&](const std::string& s) {
      ++col;
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') {
        throw ParseError("metrics line " + std::to_string(n) + " column " + std::to_string(col) +
                         ": bad number '" + s + "'");
      }
      return v;
    };
    auto count = [&](const std::string& s) { return static_cast<std::size_t>(real(s)); };
    MetricsReport r;
    r.mode = cells[0];
    ++col;
    r.seed = static_cast<std::uint64_t>(std::stoull(cells[1]));
    ++col;
    r.scope = cells[2];
    ++col;
    r.samples = count(cells[3]);
    r.acc = real(cells[4]);
    r.auc = real(cells[5]);
    r.f1 = real(cells[6]);
    r.mcc = real(cells[7]);
    r.precision_at_budget = real(cells[8]);
    r.fpr_at_budget = real(cells[9]);
    r.counts = {count(cells[10]), count(cells[11]), count(cells[12]), count(cells[13])};
    out.push_back(std::move(r));
  }
  return out;
}

std::string summary_csv(std::span<const MetricsReport> reports) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<MetricsReport>> groups;
  for (const auto& r : reports) {
    const auto key = std::make_pair(r.mode, r.scope);
    if (!groups.contains(key)) order.push_back(key);
    groups[key].push_back(r);
  }
  std::ostringstream out;
  out << "mode,scope,metric,n,mean,std,median\n";
  for (const auto& key : order) {
    const auto& g = groups[key];
    const auto stats = evaluation::summarize_seeds(g);
    for (const char* metric :
         {"acc", "auc", "f1", "mcc", "precision_at_budget", "fpr_at_budget"}) {
      const auto& s = stats.at(metric);
      out << key.first << ',' << key.second << ',' << metric << ',' << g.size() << ','
          << format(s.mean) << ',' << format(s.std) << ',' << format(s.median) << '\n';
    }
  }
  return out.str();
}

}  // namespace pvfd::harness
