#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "pvfd/params.hpp"
#include "pvfd/rng.hpp"
#include "pvfd/tape.hpp"
#include "pvfd/tensor.hpp"

namespace pvfd::detector {

inline constexpr int kNormal = 0;
inline constexpr int kFraud = 1;
inline constexpr std::size_t kClassCount = 2;
inline constexpr std::size_t kIrradianceChannels = 3;  // DHI, DNI, GHI

struct DetectorConfig {
  std::size_t slots = 48;   // T
  std::size_t window = 24;  // T^Sub
  std::size_t stride = 6;   // S
  std::size_t d_lstm = 128;
  std::size_t d_cnn_lstm = 128;
  std::size_t d_sa = 128;
  std::size_t d_ca = 128;
  std::size_t heads = 4;
  std::size_t conv_channels = 8;
  std::size_t conv_kernel = 3;
  std::size_t mlp_hidden = 128;
  // Input unit scaling applied before the encoders (kW, W/m^2 -> kW/m^2).
  double pvg_scale = 1.0;
  double irr_scale = 1e-3;

  // L^Window = (T - T^Sub) / S + 1
  std::size_t window_count() const;
  // D^p = T^Sub * 2 * d_CA
  std::size_t embedding_dim() const { return window * 2 * d_ca; }
  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

// Sliding-window view of one prosumer-day.
struct WindowedInput {
  Tensor pvg;  // [T^Sub x L], column k is window k
  Tensor irr;  // [T^Sub x L x 3]
};

// Window k (0-based) covers slots k*S .. k*S + T^Sub - 1.
WindowedInput segment_day(std::span<const double> pvg, const Tensor& irr, std::size_t window,
                          std::size_t stride);

struct Prediction {
  double prob_normal = 0.5;
  double prob_fraud = 0.5;
};

struct Prototype {
  std::vector<double> mean;
  std::size_t count = 0;
};
using PrototypeSet = std::map<int, Prototype>;
using GlobalPrototypes = std::map<int, std::vector<double>>;

// Architecture, parameter layout, and forward passes. Stateless with respect
// to parameter values, which are passed in as flat vectors.
class Detector {
 public:
  explicit Detector(DetectorConfig config);

  const DetectorConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t parameter_count() const { return layout_.total(); }

  void init_base(std::span<double> params, Rng& rng) const;
  void init_head(std::span<double> params, Rng& rng) const;
  std::vector<double> init_params(Rng& base_rng, Rng& head_rng) const;

  // One Var per layout segment.
  // Trainable binding records gradients; constant binding is for inference.
  std::vector<Var> bind(Tape& tape, std::span<const double> params, bool trainable = true) const;

  // Recorded forward stages over a batch of B days. Encoder outputs stack the
  // per-day [T^Sub x d] sequences as [B*T^Sub x d].
  using Batch = std::span<const WindowedInput* const>;
  Var encode_pvg(Tape& tape, const std::vector<Var>& p, Batch batch) const;
  Var encode_irr(Tape& tape, const std::vector<Var>& p, Batch batch) const;
  // -> [B x D^p]
  Var fuse(Tape& tape, const std::vector<Var>& p, Var h_pvg, Var h_irr, std::size_t batch = 1) const;
  Var embed(Tape& tape, const std::vector<Var>& p, Batch batch) const;
  // embeddings [n x D^p] -> probabilities [n x 2]
  Var head(Tape& tape, const std::vector<Var>& p, Var embeddings) const;

  // Forward-only conveniences.
  std::vector<double> embedding(std::span<const double> params, const WindowedInput& w) const;
  std::vector<std::vector<double>> embeddings(std::span<const double> params, Batch batch) const;
  Prediction predict(std::span<const double> params, const WindowedInput& w) const;
  std::vector<Prediction> predict(std::span<const double> params, Batch batch) const;

  // Segment indices, in layout order.
  enum Segment : std::size_t {
    kPvgLstmIn, kPvgLstmRec, kPvgLstmBias,
    kIrrConvKernel, kIrrConvBias,
    kIrrLstmIn, kIrrLstmRec, kIrrLstmBias,
    kSelfUq, kSelfUk, kSelfUv, kSelfWq, kSelfWk, kSelfWv,
    kCrossUq, kCrossUk, kCrossUv, kCrossWq, kCrossWk, kCrossWv,
    kHeadW1, kHeadB1, kHeadW2, kHeadB2,
    kSegmentCount
  };

 private:
  Tensor scaled_pvg(Batch batch) const;
  Tensor scaled_irr(Batch batch) const;

  DetectorConfig config_;
  ParamLayout layout_;
};

// Forward-only stage outputs with every attention map exposed.
struct FusionTrace {
  std::vector<Tensor> self_pvg;   // A^G per head
  std::vector<Tensor> self_irr;   // A^I per head
  std::vector<Tensor> cross_pvg;  // A^{G-I} per head
  std::vector<Tensor> cross_irr;  // A^{I-G} per head
  std::vector<double> embedding;  // length D^p
};

Tensor encode_pvg(const Detector& model, std::span<const double> params, const WindowedInput& w);
Tensor encode_irr(const Detector& model, std::span<const double> params, const WindowedInput& w);
FusionTrace co_attention_fuse(const Detector& model, std::span<const double> params,
                              const Tensor& h_pvg, const Tensor& h_irr);

// Two-layer MLP head on one fused embedding.
Prediction predict(const Detector& model, std::span<const double> params,
                   std::span<const double> embedding);

// Per-class arithmetic mean with support count; absent classes are omitted.
PrototypeSet compute_local_prototypes(const std::vector<std::vector<double>>& embeddings,
                                      std::span<const int> labels);

// sum_k (1 - cos(local_k, global_k)) over global classes; a class missing
// locally contributes with a zero local vector. Local classes missing from
// the global set raise ProtocolError.
double prototype_regularizer(const PrototypeSet& local, const GlobalPrototypes& global);

// Mean cross-entropy plus lambda times the regularizer; the regularizer is
// zero when `global` is null.
double local_loss(const Tensor& probs, std::span<const int> labels, const PrototypeSet& local,
                  const GlobalPrototypes* global, double lambda);

struct Sample {
  WindowedInput input;
  int label = kNormal;
};

struct TrainOptions {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  double lambda = 1.0;
};

struct EpochResult {
  double loss = 0.0;          // sample-weighted mean of batch losses
  double cross_entropy = 0.0; // same weighting, CE term only
  std::size_t batches = 0;
};

// Loss and parameter gradient of one mini-batch at `params`.
struct BatchEvaluation {
  double loss = 0.0;
  double cross_entropy = 0.0;
  std::vector<double> gradient;
};

BatchEvaluation evaluate_batch(const Detector& model, std::span<const double> params,
                               std::span<const Sample* const> batch,
                               const GlobalPrototypes* global, double lambda);

// One shuffled pass of plain gradient descent over `data`. Batch-level
// prototypes feed the regularizer. Throws DivergenceError on a non-finite loss,
// leaving `params` at the last finite state.
EpochResult train_epoch(const Detector& model, std::span<double> params,
                        std::span<const Sample> data, const TrainOptions& options,
                        const GlobalPrototypes* global, std::uint64_t shuffle_seed);

// Full-dataset embeddings under `params`, evaluated `chunk` days at a time.
std::vector<std::vector<double>> embed_all(const Detector& model, std::span<const double> params,
                                           std::span<const Sample> data, std::size_t chunk = 64);

}  // namespace pvfd::detector
