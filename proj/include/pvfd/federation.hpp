#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvfd/datagen.hpp"
#include "pvfd/detector.hpp"

// Round loop for the three training modes, wire messages, and communication
// accounting. Clients run sequentially in a configurable order; every
// aggregate is formed in community-id order.

namespace pvfd::federation {

enum class Mode { kLocalOnly, kFedAvg, kProposed };

// "local-only", "fedavg", "proposed"; anything else throws ConfigError.
Mode mode_select(std::string_view name);
std::string_view mode_name(Mode mode);

struct SplitParams {
  std::vector<double> base;
  std::vector<double> head;
};

SplitParams split_params(const ParamLayout& layout, std::span<const double> params);
std::vector<double> concat_params(std::span<const double> base, std::span<const double> head);

struct UplinkPrototype {
  std::vector<double> mean;
  std::uint64_t count = 0;  // |D_{i,k}|, 0 when the class is absent locally
};

struct UplinkMessage {
  std::uint32_t community_id = 0;
  std::uint32_t round = 0;
  std::vector<double> params;  // base part (proposed) or all parameters (fedavg)
  std::map<int, UplinkPrototype> prototypes;
};

struct DownlinkMessage {
  std::uint32_t round = 0;
  std::vector<double> params;
  detector::GlobalPrototypes prototypes;
};

// sum_i (w_i / sum w) * params_i, accumulated in message order.
std::vector<double> aggregate_base(std::span<const UplinkMessage> uplinks,
                                   std::span<const double> weights);

// Support-weighted mean per class. Classes with zero total support are left
// out; a note is appended to `warnings` when given.
detector::GlobalPrototypes aggregate_prototypes(std::span<const UplinkMessage> uplinks,
                                                std::vector<std::string>* warnings = nullptr);

// Binary, self-describing: magic, kind, then named fields (u64 scalars or
// f64 arrays), little-endian.
using Bytes = std::vector<std::uint8_t>;
Bytes encode(const UplinkMessage& m);
Bytes encode(const DownlinkMessage& m);
UplinkMessage decode_uplink(const Bytes& bytes);
DownlinkMessage decode_downlink(const Bytes& bytes);

// Number of f64 entries carried by a serialized message.
std::size_t transmitted_parameters(const Bytes& bytes);

// Field names other than the protocol's, and any run of four consecutive
// nonzero values from a raw series (reported, actual, or an irradiance
// channel) found inside an f64 array. Empty when clean.
std::vector<std::string> privacy_scan(const Bytes& bytes,
                                      std::span<const datagen::ProsumerDay> raw);

// Parameters exchanged per round, up plus down.
std::size_t account_communication(Mode mode, std::size_t communities, std::size_t base_count,
                                  std::size_t head_count, std::size_t embedding_dim);

struct ClientData {
  std::uint32_t community_id = 0;
  std::vector<detector::Sample> train;
};

std::vector<detector::Sample> to_samples(std::span<const datagen::ProsumerDay> days,
                                        const detector::DetectorConfig& config);

std::vector<ClientData> client_data(const datagen::Dataset& data,
                                    const detector::DetectorConfig& config);

struct FederationConfig {
  Mode mode = Mode::kProposed;
  std::size_t rounds = 30;
  detector::TrainOptions train;
  std::uint64_t seed = 0;
  // Execution order as positions into the client list; empty means id order.
  std::vector<std::size_t> client_order;
  // Sees every serialized message: (bytes, uplink?, community position).
  std::function<void(const Bytes&, bool, std::size_t)> observer;
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<std::uint32_t> community;
  std::vector<double> loss;
  std::vector<double> cross_entropy;
  std::vector<std::size_t> tx_params;  // per community, up + down, measured
  std::size_t tx_total = 0;
  std::size_t tx_expected = 0;  // account_communication
};

struct TrainingState {
  std::vector<std::vector<double>> local;  // per client, after its last update
  std::vector<double> global;              // base (proposed) or all params (fedavg)
  detector::GlobalPrototypes prototypes;   // from the previous round
};

// One shared initialization for every client; the global part is the base
// (proposed) or the whole vector (other modes).
TrainingState initial_state(const detector::Detector& model, Mode mode, std::size_t clients,
                            std::uint64_t seed);

// One synchronous round r >= 1. Any client failure propagates before the
// server aggregates, leaving `state` untouched.
RoundLog run_round(const detector::Detector& model, std::span<const ClientData> clients,
                   const FederationConfig& config, TrainingState& state, std::size_t r);

struct TrainingResult {
  std::vector<std::vector<double>> models;  // theta*_i per client
  std::vector<RoundLog> logs;
  TrainingState state;
  std::size_t rounds_completed = 0;
  bool diverged = false;
  std::string divergence;
};

// Final models: [global base; local head] (proposed), the global model
// (fedavg), or each client's own model (local-only). Divergence halts the
// loop and keeps the last completed round.
TrainingResult run_training(const detector::Detector& model, std::span<const ClientData> clients,
                            const FederationConfig& config);

std::vector<double> final_model(const detector::Detector& model, Mode mode,
                                const TrainingState& state, std::size_t client);

// round,community,loss,cross_entropy,regularizer,tx_params
std::string round_log_csv(std::span<const RoundLog> logs);

}  // namespace pvfd::federation
