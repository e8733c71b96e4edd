#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "pvfd/error.hpp"
#include "pvfd/harness.hpp"

namespace pvfd::harness {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError(key + ": " + what);
}

std::string format(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = first + text.size();
  const auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last) fail(key, "expected a number, got '" + text + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* first = text.data();
  const auto* last = first + text.size();
  const auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last) {
    fail(key, "expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  return static_cast<std::size_t>(to_u64(key, text));
}

struct Key {
  const char* section;
  const char* name;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define PVFD_SIZE(sec, nm, member)                                                          \
  Key{sec, nm, [](ExperimentConfig& c, const std::string& k, const std::string& v) {        \
        c.member = to_size(k, v);                                                           \
      },                                                                                    \
      [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define PVFD_REAL(sec, nm, member)                                                          \
  Key{sec, nm, [](ExperimentConfig& c, const std::string& k, const std::string& v) {        \
        c.member = to_double(k, v);                                                         \
      },                                                                                    \
      [](const ExperimentConfig& c) { return format(c.member); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"experiment", "seed",
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
          [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      Key{"experiment", "mode",
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            try {
              c.mode = federation::mode_select(v);
            } catch (const ConfigError&) {
              fail(k, "expected local-only, fedavg or proposed, got '" + v + "'");
            }
          },
          [](const ExperimentConfig& c) { return std::string(federation::mode_name(c.mode)); }},
      PVFD_SIZE("experiment", "rounds", rounds),
      Key{"experiment", "output_dir",
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            if (v.empty()) fail(k, "must not be empty");
            c.output_dir = v;
          },
          [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      PVFD_REAL("experiment", "budget_per_thousand", budget_per_thousand),

      PVFD_SIZE("data", "communities", data.communities),
      PVFD_SIZE("data", "prosumers_per_community", data.prosumers_per_community),
      PVFD_SIZE("data", "days", data.days),
      PVFD_REAL("data", "fraud_rate", data.fraud_rate),
      Key{"data", "type_mix",
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::stringstream in(v);
            std::string part;
            std::size_t i = 0;
            while (std::getline(in, part, ',')) {
              const auto b = part.find_first_not_of(' ');
              const auto e = part.find_last_not_of(' ');
              part = b == std::string::npos ? "" : part.substr(b, e - b + 1);
              if (i == 3) fail(k, "expected three comma-separated weights");
              c.data.type_mix[i++] = to_double(k, part);
            }
            if (i != 3) fail(k, "expected three comma-separated weights");
          },
          [](const ExperimentConfig& c) {
            return format(c.data.type_mix[0]) + "," + format(c.data.type_mix[1]) + "," +
                   format(c.data.type_mix[2]);
          }},
      PVFD_REAL("data", "capacity_lo", data.capacity_lo),
      PVFD_REAL("data", "capacity_hi", data.capacity_hi),
      PVFD_REAL("data", "efficiency_lo", data.efficiency_lo),
      PVFD_REAL("data", "efficiency_hi", data.efficiency_hi),
      PVFD_REAL("data", "pv_noise", data.pv_noise),
      PVFD_REAL("data", "cap_margin", data.cap_margin),
      PVFD_REAL("data", "train_fraction", data.train_fraction),
      PVFD_REAL("data", "test_share", data.test_share),

      PVFD_SIZE("model", "slots", model.slots),
      PVFD_SIZE("model", "window", model.window),
      PVFD_SIZE("model", "stride", model.stride),
      PVFD_SIZE("model", "d_lstm", model.d_lstm),
      PVFD_SIZE("model", "d_cnn_lstm", model.d_cnn_lstm),
      PVFD_SIZE("model", "d_sa", model.d_sa),
      PVFD_SIZE("model", "d_ca", model.d_ca),
      PVFD_SIZE("model", "heads", model.heads),
      PVFD_SIZE("model", "conv_channels", model.conv_channels),
      PVFD_SIZE("model", "conv_kernel", model.conv_kernel),
      PVFD_SIZE("model", "mlp_hidden", model.mlp_hidden),
      PVFD_REAL("model", "pvg_scale", model.pvg_scale),
      PVFD_REAL("model", "irr_scale", model.irr_scale),

      PVFD_REAL("training", "learning_rate", train.learning_rate),
      PVFD_SIZE("training", "batch_size", train.batch_size),
      PVFD_REAL("training", "lambda", train.lambda),
  };
  return table;
}

#undef PVFD_SIZE
#undef PVFD_REAL

const Key* find_key(const std::string& dotted) {
  for (const auto& k : keys()) {
    if (dotted == std::string(k.section) + "." + k.name) return &k;
  }
  return nullptr;
}

ExperimentConfig preset(const std::string& key, const std::string& name) {
  if (name == "paper") return paper_defaults();
  if (name == "desk") return desk_preset();
  fail(key, "expected paper or desk, got '" + name + "'");
}

}  // namespace

ExperimentConfig paper_defaults() { return ExperimentConfig{}; }

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.data.prosumers_per_community = 8;
  c.rounds = 30;
  c.model.d_lstm = c.model.d_cnn_lstm = c.model.d_sa = c.model.d_ca = 8;
  c.model.heads = 2;
  c.model.conv_channels = 4;
  c.model.mlp_hidden = 32;
  c.train.learning_rate = 0.2;
  c.train.batch_size = 8;
  c.train.lambda = 0.1;
  c.output_dir = "runs";
  return c;
}

void ExperimentConfig::validate() const {
  const auto& m = model;
  if (m.slots == 0) fail("model.slots", "must be positive");
  if (m.slots % 24 != 0) fail("model.slots", "must be a multiple of 24");
  if (data.weather.slots != m.slots) fail("model.slots", "must match the generated slot count");
  if (m.window == 0 || m.window > m.slots) fail("model.window", "must satisfy 0 < window <= slots");
  if (m.stride == 0) fail("model.stride", "must be positive");
  if ((m.slots - m.window) % m.stride != 0) {
    fail("model.stride", "(slots - window) = " + std::to_string(m.slots - m.window) +
                             " is not divisible by stride = " + std::to_string(m.stride));
  }
  const std::pair<const char*, std::size_t> widths[] = {{"model.d_lstm", m.d_lstm},
                                                        {"model.d_cnn_lstm", m.d_cnn_lstm},
                                                        {"model.d_sa", m.d_sa},
                                                        {"model.d_ca", m.d_ca},
                                                        {"model.mlp_hidden", m.mlp_hidden},
                                                        {"model.conv_channels", m.conv_channels}};
  for (const auto& [key, w] : widths) {
    if (w == 0) fail(key, "must be positive");
  }
  if (m.heads == 0) fail("model.heads", "must be positive");
  if (m.d_sa % m.heads != 0) {
    fail("model.heads", "d_sa = " + std::to_string(m.d_sa) + " is not divisible by heads = " +
                            std::to_string(m.heads));
  }
  if (m.d_ca % m.heads != 0) {
    fail("model.heads", "d_ca = " + std::to_string(m.d_ca) + " is not divisible by heads = " +
                            std::to_string(m.heads));
  }
  if (m.conv_kernel % 2 == 0) fail("model.conv_kernel", "must be odd");
  if (!(m.pvg_scale > 0.0)) fail("model.pvg_scale", "must be positive");
  if (!(m.irr_scale > 0.0)) fail("model.irr_scale", "must be positive");

  if (!(train.learning_rate >= 0.0 && std::isfinite(train.learning_rate))) {
    fail("training.learning_rate", "must be finite and nonnegative");
  }
  if (train.batch_size == 0) fail("training.batch_size", "must be positive");
  if (!(train.lambda >= 0.0 && std::isfinite(train.lambda))) {
    fail("training.lambda", "must be finite and nonnegative");
  }
  if (rounds == 0) fail("experiment.rounds", "must be at least 1");
  if (!(budget_per_thousand >= 0.0 && budget_per_thousand <= 1000.0)) {
    fail("experiment.budget_per_thousand", "must lie in [0, 1000]");
  }

  if (data.communities == 0) fail("data.communities", "must be positive");
  if (data.prosumers_per_community == 0) fail("data.prosumers_per_community", "must be positive");
  if (data.days < 2) fail("data.days", "must be at least 2");
  if (!(data.fraud_rate >= 0.0 && data.fraud_rate < 1.0)) fail("data.fraud_rate", "must lie in [0, 1)");
  for (const double w : data.type_mix) {
    if (!(w >= 0.0)) fail("data.type_mix", "weights must be nonnegative");
  }
  if (!(data.capacity_lo > 0.0 && data.capacity_lo <= data.capacity_hi)) {
    fail("data.capacity_lo", "must satisfy 0 < capacity_lo <= capacity_hi");
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    fail("data.train_fraction", "must lie in (0, 1)");
  }
  if (!(data.test_share > 0.0 && data.test_share <= 1.0)) fail("data.test_share", "must lie in (0, 1]");
  try {
    data.validate();
  } catch (const ConfigError& e) {
    fail("data", e.what());
  }
  try {
    model.validate();
  } catch (const ConfigError& e) {
    fail("model", e.what());
  }
}

ExperimentConfig validate_config(std::string_view text, const Overrides& overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  {
    std::istringstream in{std::string(text)};
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ParseError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
  }

  // Flatten into dotted keys, rejecting anything outside a known section.
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      if (!body.data().empty()) fail(section, "keys must appear inside a [section]");
      continue;
    }
    for (const auto& [name, value] : body) {
      entries.emplace_back(section + "." + name, value.data());
    }
  }
  for (const auto& [k, v] : overrides) entries.emplace_back(k, v);

  ExperimentConfig config = paper_defaults();
  for (const auto& [k, v] : entries) {
    if (k == "experiment.preset") config = preset(k, v);
  }
  for (const auto& [k, v] : entries) {
    if (k == "experiment.preset") continue;
    const Key* key = find_key(k);
    if (!key) fail(k, "unknown key");
    key->set(config, k, v);
  }
  config.data.weather.slots = config.model.slots;
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return validate_config(text.str(), overrides);
}

std::string config_text(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.name << " = " << k.get(config) << '\n';
  }
  return out.str();
}

}  // namespace pvfd::harness
