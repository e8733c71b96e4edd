#include "pvfd/federation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pvfd/error.hpp"

namespace pvfd::federation {

using detector::Detector;
using detector::GlobalPrototypes;

Mode mode_select(std::string_view name) {
  if (name == "local-only") return Mode::kLocalOnly;
  if (name == "fedavg") return Mode::kFedAvg;
  if (name == "proposed") return Mode::kProposed;
  throw ConfigError("mode: unknown value '" + std::string(name) +
                    "' (expected local-only, fedavg or proposed)");
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kLocalOnly: return "local-only";
    case Mode::kFedAvg: return "fedavg";
    case Mode::kProposed: return "proposed";
  }
  return "?";
}

SplitParams split_params(const ParamLayout& layout, std::span<const double> params) {
  if (params.size() != layout.total()) {
    throw DimensionError("split_params: " + std::to_string(params.size()) + " values for a " +
                         std::to_string(layout.total()) + "-parameter layout");
  }
  const auto cut = params.begin() + static_cast<std::ptrdiff_t>(layout.base_count());
  return {{params.begin(), cut}, {cut, params.end()}};
}

std::vector<double> concat_params(std::span<const double> base, std::span<const double> head) {
  std::vector<double> out(base.begin(), base.end());
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

std::vector<double> aggregate_base(std::span<const UplinkMessage> uplinks,
                                   std::span<const double> weights) {
  if (uplinks.empty()) throw ProtocolError("aggregate_base: no uplinks");
  if (weights.size() != uplinks.size()) {
    throw ProtocolError("aggregate_base: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(uplinks.size()) + " uplinks");
  }
  const std::size_t n = uplinks.front().params.size();
  double total = 0.0;
  for (std::size_t i = 0; i < uplinks.size(); ++i) {
    if (uplinks[i].params.size() != n) {
      throw ProtocolError("aggregate_base: community " + std::to_string(uplinks[i].community_id) +
                          " sent " + std::to_string(uplinks[i].params.size()) +
                          " parameters, expected " + std::to_string(n));
    }
    if (!(weights[i] > 0.0)) throw ProtocolError("aggregate_base: weights must be positive");
    total += weights[i];
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < uplinks.size(); ++i) {
    const double w = weights[i] / total;
    const auto& p = uplinks[i].params;
    for (std::size_t j = 0; j < n; ++j) out[j] += w * p[j];
  }
  return out;
}

GlobalPrototypes aggregate_prototypes(std::span<const UplinkMessage> uplinks,
                                      std::vector<std::string>* warnings) {
  std::map<int, std::pair<std::vector<double>, std::uint64_t>> acc;
  for (const auto& m : uplinks) {
    for (const auto& [k, p] : m.prototypes) {
      auto& [sum, count] = acc[k];
      if (sum.empty()) sum.assign(p.mean.size(), 0.0);
      if (p.mean.size() != sum.size()) {
        throw ProtocolError("aggregate_prototypes: class " + std::to_string(k) +
                            " prototype length differs across communities");
      }
      const double c = static_cast<double>(p.count);
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += c * p.mean[j];
      count += p.count;
    }
  }
  GlobalPrototypes out;
  for (auto& [k, entry] : acc) {
    auto& [sum, count] = entry;
    if (count == 0) {
      if (warnings) warnings->push_back("class " + std::to_string(k) + " has zero support");
      continue;
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& v : sum) v *= inv;
    out[k] = std::move(sum);
  }
  return out;
}

std::size_t account_communication(Mode mode, std::size_t communities, std::size_t base_count,
                                  std::size_t head_count, std::size_t embedding_dim) {
  switch (mode) {
    case Mode::kLocalOnly: return 0;
    case Mode::kFedAvg: return 2 * communities * (base_count + head_count);
    case Mode::kProposed: return 2 * communities * (base_count + 2 * embedding_dim);
  }
  throw ConfigError("account_communication: unknown mode");
}

std::vector<detector::Sample> to_samples(std::span<const datagen::ProsumerDay> days,
                                         const detector::DetectorConfig& config) {
  std::vector<detector::Sample> out;
  out.reserve(days.size());
  for (const auto& d : days) {
    out.push_back({detector::segment_day(d.pvg_reported, d.irr, config.window, config.stride),
                   d.label});
  }
  return out;
}

std::vector<ClientData> client_data(const datagen::Dataset& data,
                                    const detector::DetectorConfig& config) {
  std::vector<ClientData> out;
  for (const auto& com : data.communities) {
    out.push_back({com.community_id, to_samples(com.train, config)});
  }
  return out;
}

TrainingState initial_state(const Detector& model, Mode mode, std::size_t clients,
                            std::uint64_t seed) {
  Rng base_rng(derive_seed(seed, SeedStream::kInitBase));
  Rng head_rng(derive_seed(seed, SeedStream::kInitHead));
  const auto theta = model.init_params(base_rng, head_rng);
  TrainingState s;
  s.local.assign(clients, theta);
  if (mode == Mode::kProposed) {
    s.global = split_params(model.layout(), theta).base;
  } else {
    s.global = theta;
  }
  return s;
}

namespace {

std::vector<std::size_t> execution_order(const FederationConfig& config, std::size_t n) {
  if (config.client_order.empty()) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
  }
  auto sorted = config.client_order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i || sorted.size() != n) {
      throw ConfigError("client_order must be a permutation of the " + std::to_string(n) +
                        " clients");
    }
  }
  return config.client_order;
}

}  // namespace

RoundLog run_round(const Detector& model, std::span<const ClientData> clients,
                   const FederationConfig& config, TrainingState& state, std::size_t r) {
  if (r == 0) throw ConfigError("rounds are numbered from 1");
  const std::size_t n = clients.size();
  if (state.local.size() != n) throw ConfigError("training state does not match client count");
  const auto order = execution_order(config, n);
  const auto& layout = model.layout();
  const Mode mode = config.mode;
  const bool exchange = mode != Mode::kLocalOnly;

  RoundLog log;
  log.round = r;
  log.loss.assign(n, 0.0);
  log.cross_entropy.assign(n, 0.0);
  log.tx_params.assign(n, 0);
  for (const auto& c : clients) log.community.push_back(c.community_id);
  log.tx_expected = account_communication(mode, n, layout.base_count(), layout.head_count(),
                                          model.config().embedding_dim());

  std::vector<std::vector<double>> trained(n);
  std::vector<UplinkMessage> uplinks(n);
  detector::TrainOptions options = config.train;
  // Round 1 has no global prototypes yet: L^Reg = 0.
  const GlobalPrototypes* global = nullptr;
  if (mode == Mode::kProposed) {
    if (r > 1 && !state.prototypes.empty()) global = &state.prototypes;
  } else {
    options.lambda = 0.0;
  }

  for (const std::size_t i : order) {
    const auto& client = clients[i];
    std::vector<double> theta;
    switch (mode) {
      case Mode::kLocalOnly: theta = state.local[i]; break;
      case Mode::kFedAvg: theta = state.global; break;
      case Mode::kProposed:
        theta = concat_params(state.global, split_params(layout, state.local[i]).head);
        break;
    }
    const auto epoch = detector::train_epoch(
        model, theta, client.train, options, global,
        derive_seed(config.seed, SeedStream::kShuffle, client.community_id, r));
    log.loss[i] = epoch.loss;
    log.cross_entropy[i] = epoch.cross_entropy;

    if (exchange) {
      UplinkMessage up;
      up.community_id = client.community_id;
      up.round = static_cast<std::uint32_t>(r);
      if (mode == Mode::kProposed) {
        up.params = split_params(layout, theta).base;
        const auto emb = detector::embed_all(model, theta, client.train);
        std::vector<int> labels;
        labels.reserve(client.train.size());
        for (const auto& s : client.train) labels.push_back(s.label);
        const auto local = detector::compute_local_prototypes(emb, labels);
        for (int k = 0; k < static_cast<int>(detector::kClassCount); ++k) {
          UplinkPrototype p;
          if (const auto it = local.find(k); it != local.end()) {
            p.mean = it->second.mean;
            p.count = it->second.count;
          } else {
            p.mean.assign(model.config().embedding_dim(), 0.0);
          }
          up.prototypes[k] = std::move(p);
        }
      } else {
        up.params = theta;
      }
      const Bytes wire = encode(up);
      if (config.observer) config.observer(wire, true, i);
      log.tx_params[i] += transmitted_parameters(wire);
      uplinks[i] = decode_uplink(wire);
    }
    trained[i] = std::move(theta);
  }

  // Server barrier: aggregate in community-id order.
  if (exchange) {
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) weights[i] = static_cast<double>(clients[i].train.size());
    DownlinkMessage down;
    down.round = static_cast<std::uint32_t>(r);
    down.params = aggregate_base(uplinks, weights);
    if (mode == Mode::kProposed) down.prototypes = aggregate_prototypes(uplinks);
    const Bytes wire = encode(down);
    const std::size_t count = transmitted_parameters(wire);
    for (const std::size_t i : order) {
      if (config.observer) config.observer(wire, false, i);
      log.tx_params[i] += count;
    }
    const auto received = decode_downlink(wire);
    state.global = received.params;
    state.prototypes = received.prototypes;
  }
  state.local = std::move(trained);
  log.tx_total = std::accumulate(log.tx_params.begin(), log.tx_params.end(), std::size_t{0});
  return log;
}

std::vector<double> final_model(const Detector& model, Mode mode, const TrainingState& state,
                                std::size_t client) {
  switch (mode) {
    case Mode::kLocalOnly: return state.local.at(client);
    case Mode::kFedAvg: return state.global;
    case Mode::kProposed:
      return concat_params(state.global, split_params(model.layout(), state.local.at(client)).head);
  }
  throw ConfigError("final_model: unknown mode");
}

TrainingResult run_training(const Detector& model, std::span<const ClientData> clients,
                            const FederationConfig& config) {
  if (config.rounds == 0) throw ConfigError("R must be at least 1");
  TrainingResult result;
  result.state = initial_state(model, config.mode, clients.size(), config.seed);
  for (std::size_t r = 1; r <= config.rounds; ++r) {
    TrainingState next = result.state;
    try {
      result.logs.push_back(run_round(model, clients, config, next, r));
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.divergence = "round " + std::to_string(r) + ": " + e.what();
      break;
    }
    result.state = std::move(next);
    result.rounds_completed = r;
  }
  for (std::size_t i = 0; i < clients.size(); ++i) {
    result.models.push_back(final_model(model, config.mode, result.state, i));
  }
  return result;
}

std::string round_log_csv(std::span<const RoundLog> logs) {
  std::ostringstream out;
  out << "round,community,loss,cross_entropy,regularizer,tx_params\n";
  char buf[160];
  for (const auto& log : logs) {
    for (std::size_t i = 0; i < log.community.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%u,%.17g,%.17g,%.17g,%zu\n", log.round,
                    log.community[i], log.loss[i], log.cross_entropy[i],
                    log.loss[i] - log.cross_entropy[i], log.tx_params[i]);
      out << buf;
    }
  }
  return out.str();
}

}  // namespace pvfd::federation
