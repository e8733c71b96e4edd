// pvfd: generate | train | evaluate | sweep | report
//
// Failures print one line on stderr:
//   error kind=<usage|config|parse|dimension|protocol|divergence|input|io> message="..."
// and exit nonzero (2 usage/config/input, 3 parse, 1 otherwise).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "pvfd/error.hpp"
#include "pvfd/harness.hpp"

namespace fs = std::filesystem;
using namespace pvfd;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "paper or desk, applied before the file")
      ->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--set", c.sets, "override as section.key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "master seed");
}

harness::ExperimentConfig resolve(const Common& c, harness::Overrides extra) {
  harness::Overrides o;
  if (!c.preset.empty()) o.emplace_back("experiment.preset", c.preset);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set: expected section.key=value, got '" + s + "'");
    }
    o.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed_given) o.emplace_back("experiment.seed", std::to_string(c.seed));
  o.insert(o.end(), extra.begin(), extra.end());

  std::string text;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    std::ostringstream s;
    s << in.rdbuf();
    text = s.str();
  }
  return harness::validate_config(text, o);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text;
}

std::string quote(std::string s) {
  std::string out = "\"";
  for (const char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    out += ch;
  }
  return out + "\"";
}

int fail(const char* kind, const std::string& message, int code) {
  std::fprintf(stderr, "error kind=%s message=%s\n", kind, quote(message).c_str());
  return code;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> out;
  std::stringstream in(list);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError("--values: bad number '" + part + "'");
    }
  }
  if (out.empty()) throw ConfigError("--values: empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated PV-generation fraud detection experiments"};
  app.require_subcommand(1);

  Common gen_c, train_c, sweep_c;

  auto* gen = app.add_subcommand("generate", "write the synthetic dataset as CSV");
  add_common(gen, gen_c);
  std::string gen_out = "data";
  gen->add_option("--out", gen_out, "output directory");

  auto* train = app.add_subcommand("train", "train, evaluate and write run artifacts");
  add_common(train, train_c);
  std::string mode;
  std::size_t rounds = 0;
  std::string train_out;
  train->add_option("--mode", mode, "local-only, fedavg or proposed");
  train->add_option("--rounds", rounds, "communication rounds R");
  train->add_option("--out", train_out, "output root (experiment.output_dir)");

  auto* eval = app.add_subcommand("evaluate", "recompute metrics from a run directory");
  std::string run_dir, eval_out, export_out;
  std::uint32_t prosumer = 0;
  eval->add_option("--run", run_dir, "run directory written by train")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "metrics CSV path (default stdout)");
  auto* prosumer_opt = eval->add_option("--prosumer", prosumer, "export daily probabilities for this prosumer");
  eval->add_option("--export", export_out, "daily probability CSV path (default stdout)")->needs(prosumer_opt);

  auto* sw = app.add_subcommand("sweep", "one run per axis value and mode");
  add_common(sw, sweep_c);
  std::string axis, values, modes = "local-only,fedavg,proposed", sweep_out;
  std::size_t jobs = 1;
  sw->add_option("--axis", axis, "fraud_rate, N or lambda")->required();
  sw->add_option("--values", values, "comma-separated axis values")->required();
  sw->add_option("--modes", modes, "comma-separated modes");
  sw->add_option("--jobs", jobs, "parallel runs (0 = hardware threads)");
  sw->add_option("--out", sweep_out, "combined CSV path (default stdout)");
  std::size_t sweep_rounds = 0;
  sw->add_option("--rounds", sweep_rounds, "communication rounds R");

  auto* rep = app.add_subcommand("report", "mean, std and median over seeds");
  std::vector<std::string> metric_files;
  std::string rep_out;
  rep->add_option("metrics", metric_files, "metrics.csv files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", rep_out, "summary CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }
  gen_c.seed_given = gen->count("--seed") > 0;
  train_c.seed_given = train->count("--seed") > 0;
  sweep_c.seed_given = sw->count("--seed") > 0;

  try {
    if (*gen) {
      const auto config = resolve(gen_c, {});
      const auto data = datagen::build_communities(config.data, config.seed);
      std::vector<datagen::ProsumerDay> days;
      for (const auto& com : data.communities) {
        days.insert(days.end(), com.train.begin(), com.train.end());
        days.insert(days.end(), com.test.begin(), com.test.end());
      }
      fs::create_directories(gen_out);
      datagen::write_csv(days, fs::path(gen_out) / "generation.csv",
                         fs::path(gen_out) / "irradiance.csv");
      emit((fs::path(gen_out) / "dataset.json").string(), datagen::manifest_json(data));
      std::cout << "dataset " << harness::dataset_digest(data) << " -> " << gen_out << "\n";
    } else if (*train) {
      harness::Overrides extra;
      if (!mode.empty()) extra.emplace_back("experiment.mode", mode);
      if (train->count("--rounds")) extra.emplace_back("experiment.rounds", std::to_string(rounds));
      if (!train_out.empty()) extra.emplace_back("experiment.output_dir", train_out);
      const auto config = resolve(train_c, extra);
      const auto run = harness::run_experiment(config);
      const auto& pooled = run.reports.back();
      std::cout << "manifest " << run.manifest.manifest_path.string() << "\n";
      std::printf("pooled acc=%.4f auc=%.4f f1=%.4f mcc=%.4f rounds=%zu%s\n", pooled.acc,
                  pooled.auc, pooled.f1, pooled.mcc, run.manifest.rounds_completed,
                  run.manifest.diverged ? " diverged" : "");
      if (run.manifest.diverged) return fail("divergence", run.manifest.divergence, 1);
    } else if (*eval) {
      const auto run = harness::evaluate_run(run_dir);
      emit(eval_out, run.metrics_csv);
      if (eval->count("--prosumer")) {
        const auto config = harness::load_config(run.manifest.config_path);
        const auto data = datagen::build_communities(config.data, config.seed);
        const detector::Detector model(config.model);
        for (std::size_t i = 0; i < data.communities.size(); ++i) {
          const auto& com = data.communities[i];
          if (std::find(com.roster.begin(), com.roster.end(), prosumer) == com.roster.end()) {
            continue;
          }
          const auto params = harness::read_params(run.manifest.model_paths.at(i));
          emit(export_out, evaluation::export_daily_probabilities(model, params, prosumer, com.test));
          return 0;
        }
        throw ConfigError("--prosumer: " + std::to_string(prosumer) + " is in no community");
      }
    } else if (*sw) {
      harness::Overrides extra;
      if (sw->count("--rounds")) extra.emplace_back("experiment.rounds", std::to_string(sweep_rounds));
      const auto config = resolve(sweep_c, extra);
      std::vector<federation::Mode> mode_list;
      std::stringstream in(modes);
      for (std::string m; std::getline(in, m, ',');) mode_list.push_back(federation::mode_select(m));
      const auto vals = parse_values(values);
      if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
      const auto result =
          harness::sweep(config, harness::axis_select(axis), vals, mode_list, jobs);
      emit(sweep_out, result.csv);
    } else if (*rep) {
      std::vector<evaluation::MetricsReport> all;
      for (const auto& f : metric_files) {
        std::ifstream in(f);
        std::ostringstream s;
        s << in.rdbuf();
        const auto part = harness::parse_reports_csv(s.str());
        all.insert(all.end(), part.begin(), part.end());
      }
      emit(rep_out, harness::summary_csv(all));
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), 3);
  } catch (const DimensionError& e) {
    return fail("dimension", e.what(), 1);
  } catch (const ProtocolError& e) {
    return fail("protocol", e.what(), 1);
  } catch (const DivergenceError& e) {
    return fail("divergence", e.what(), 1);
  } catch (const std::invalid_argument& e) {
    return fail("input", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("io", e.what(), 1);
  }
  return 0;
}
