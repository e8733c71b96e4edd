#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pvfd/datagen.hpp"
#include "pvfd/detector.hpp"
#include "pvfd/evaluation.hpp"
#include "pvfd/federation.hpp"

namespace pvfd::harness {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  datagen::DatagenConfig data;
  detector::DetectorConfig model;
  detector::TrainOptions train;
  std::size_t rounds = 100;
  federation::Mode mode = federation::Mode::kProposed;
  std::filesystem::path output_dir = "runs";
  double budget_per_thousand = 5.0;

  // Throws ConfigError whose message starts with "<section>.<key>: ".
  void validate() const;
};

ExperimentConfig paper_defaults();

// Small model, 5 x 8 prosumers, R = 30, a step size that moves in 30 rounds.
ExperimentConfig desk_preset();

using Overrides = std::vector<std::pair<std::string, std::string>>;

// INI text: [experiment] [data] [model] [training] sections of key = value.
// `experiment.preset = desk|paper` selects the starting point. Overrides use
// dotted keys and win over the text. Empty text gives paper defaults.
ExperimentConfig validate_config(std::string_view text, const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

// Canonical text; validate_config(config_text(c)) == c.
std::string config_text(const ExperimentConfig& config);

// SHA-256 over every train/test day of every community, hex encoded.
std::string dataset_digest(const datagen::Dataset& data);

struct RunManifest {
  std::string config;  // canonical config text
  std::string dataset_digest;
  std::filesystem::path directory;
  std::filesystem::path config_path;
  std::filesystem::path dataset_path;
  std::filesystem::path rounds_path;
  std::filesystem::path metrics_path;
  std::filesystem::path manifest_path;
  std::vector<std::filesystem::path> model_paths;
  std::size_t rounds_completed = 0;
  bool diverged = false;
  std::string divergence;
  double wall_clock_seconds = 0.0;

  std::vector<std::filesystem::path> files() const;
  std::string json() const;
};

struct RunOptions {
  bool write_artifacts = true;
  std::vector<std::size_t> client_order;
  // Overrides <output_dir>/<mode>-seed<seed>.
  std::filesystem::path directory;
};

struct RunResult {
  RunManifest manifest;
  std::vector<evaluation::MetricsReport> reports;  // per community, then pooled
  std::vector<federation::RoundLog> logs;
  std::string metrics_csv;
  std::string rounds_csv;
};

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Per-community and pooled reports on the held-out test days.
std::vector<evaluation::MetricsReport> evaluate_models(
    const ExperimentConfig& config, const datagen::Dataset& data,
    std::span<const std::vector<double>> models);

std::string params_csv(std::span<const double> params);
std::vector<double> read_params(const std::filesystem::path& path);

// Reads a directory written by run_experiment; checks the dataset digest.
RunResult evaluate_run(const std::filesystem::path& directory);

enum class Axis { kFraudRate, kCommunities, kLambda };
Axis axis_select(std::string_view name);
std::string_view axis_name(Axis axis);

// Applies one axis value. The N axis keeps N * prosumers_per_community fixed.
ExperimentConfig with_axis(const ExperimentConfig& base, Axis axis, double value);

struct SweepResult {
  std::string csv;  // axis,axis_value,mode,seed,scope,metric,value
  std::vector<RunResult> runs;  // value-major, then mode
};

// One run per (value, mode) sharing the base seed, `jobs` at a time.
SweepResult sweep(const ExperimentConfig& base, Axis axis, std::span<const double> values,
                  std::span<const federation::Mode> modes, std::size_t jobs = 1,
                  bool write_artifacts = true);

std::vector<evaluation::MetricsReport> parse_reports_csv(std::string_view text);

// mode,scope,metric,n,mean,std,median over seeds for each (mode, scope).
std::string summary_csv(std::span<const evaluation::MetricsReport> reports);

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace pvfd::harness
