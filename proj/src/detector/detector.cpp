#include "pvfd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvfd/error.hpp"
#include "pvfd/init.hpp"
#include "pvfd/numerics.hpp"
#include "pvfd/ops.hpp"

namespace pvfd::detector {

std::size_t DetectorConfig::window_count() const { return (slots - window) / stride + 1; }

void DetectorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (slots == 0) fail("T must be positive");
  if (window == 0 || window > slots) fail("T_sub must satisfy 0 < T_sub <= T");
  if (stride == 0) fail("S must be positive");
  if ((slots - window) % stride != 0) {
    fail("(T - T_sub) = " + std::to_string(slots - window) + " is not divisible by S = " +
         std::to_string(stride));
  }
  if (d_lstm == 0 || d_cnn_lstm == 0 || d_sa == 0 || d_ca == 0 || mlp_hidden == 0) {
    fail("layer widths must be positive");
  }
  if (heads == 0) fail("head count must be positive");
  if (d_sa % heads != 0) {
    fail("d_SA = " + std::to_string(d_sa) + " is not divisible by h = " + std::to_string(heads));
  }
  if (d_ca % heads != 0) {
    fail("d_CA = " + std::to_string(d_ca) + " is not divisible by h = " + std::to_string(heads));
  }
  if (conv_channels == 0) fail("conv channel count must be positive");
  if (conv_kernel % 2 == 0) fail("conv kernel size must be odd");
  if (!(pvg_scale > 0.0) || !(irr_scale > 0.0)) fail("input scales must be positive");
}

WindowedInput segment_day(std::span<const double> pvg, const Tensor& irr, std::size_t window,
                          std::size_t stride) {
  const std::size_t slots = pvg.size();
  if (window == 0 || window > slots || stride == 0 || (slots - window) % stride != 0) {
    throw ConfigError("cannot segment " + std::to_string(slots) + " slots into windows of " +
                      std::to_string(window) + " with stride " + std::to_string(stride));
  }
  if (irr.rank() != 2 || irr.dim(0) != slots || irr.dim(1) != kIrradianceChannels) {
    throw DimensionError("irradiance must be [" + std::to_string(slots) + "x3], got " +
                         shape_string(irr.shape()));
  }
  const std::size_t count = (slots - window) / stride + 1;
  WindowedInput out{Tensor({window, count}), Tensor({window, count, kIrradianceChannels})};
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t t = 0; t < window; ++t) {
      const std::size_t slot = k * stride + t;
      out.pvg.at(t, k) = pvg[slot];
      for (std::size_t c = 0; c < kIrradianceChannels; ++c) {
        out.irr[(t * count + k) * kIrradianceChannels + c] = irr.at(slot, c);
      }
    }
  }
  return out;
}

Detector::Detector(DetectorConfig config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::size_t windows = c.window_count();
  const auto base = ParamGroup::kBase;
  const auto head = ParamGroup::kHead;
  layout_.add("pvg_lstm.w_in", {windows, 4 * c.d_lstm}, base);
  layout_.add("pvg_lstm.w_rec", {c.d_lstm, 4 * c.d_lstm}, base);
  layout_.add("pvg_lstm.bias", {4 * c.d_lstm}, base, true);
  layout_.add("irr_conv.kernel", {c.conv_kernel, c.conv_kernel, kIrradianceChannels, c.conv_channels},
              base);
  layout_.add("irr_conv.bias", {c.conv_channels}, base, true);
  layout_.add("irr_lstm.w_in", {windows * c.conv_channels, 4 * c.d_cnn_lstm}, base);
  layout_.add("irr_lstm.w_rec", {c.d_cnn_lstm, 4 * c.d_cnn_lstm}, base);
  layout_.add("irr_lstm.bias", {4 * c.d_cnn_lstm}, base, true);
  for (const char* name : {"self_attn.u_q", "self_attn.u_k", "self_attn.u_v"}) {
    layout_.add(name, {c.d_lstm, c.d_sa}, base);
  }
  for (const char* name : {"self_attn.w_q", "self_attn.w_k", "self_attn.w_v"}) {
    layout_.add(name, {c.d_cnn_lstm, c.d_sa}, base);
  }
  for (const char* name : {"cross_attn.u_q", "cross_attn.u_k", "cross_attn.u_v", "cross_attn.w_q",
                           "cross_attn.w_k", "cross_attn.w_v"}) {
    layout_.add(name, {c.d_sa, c.d_ca}, base);
  }
  layout_.add("head.w1", {c.embedding_dim(), c.mlp_hidden}, head);
  layout_.add("head.b1", {c.mlp_hidden}, head, true);
  layout_.add("head.w2", {c.mlp_hidden, kClassCount}, head);
  layout_.add("head.b2", {kClassCount}, head, true);
}

void Detector::init_base(std::span<double> params, Rng& rng) const {
  for (const auto& seg : layout_.segments()) {
    if (seg.group == ParamGroup::kBase) init_segment(params, seg, rng);
  }
}

void Detector::init_head(std::span<double> params, Rng& rng) const {
  for (const auto& seg : layout_.segments()) {
    if (seg.group == ParamGroup::kHead) init_segment(params, seg, rng);
  }
}

std::vector<double> Detector::init_params(Rng& base_rng, Rng& head_rng) const {
  std::vector<double> params(layout_.total(), 0.0);
  init_base(params, base_rng);
  init_head(params, head_rng);
  return params;
}

std::vector<Var> Detector::bind(Tape& tape, std::span<const double> params, bool trainable) const {
  if (params.size() != layout_.total()) {
    throw DimensionError("parameter vector has " + std::to_string(params.size()) +
                         " entries, layout expects " + std::to_string(layout_.total()));
  }
  std::vector<Var> vars;
  vars.reserve(layout_.segments().size());
  for (const auto& seg : layout_.segments()) {
    vars.push_back(trainable ? tape.parameter(params, seg)
                             : tape.constant(segment_tensor(params, seg)));
  }
  return vars;
}

namespace {

void check_input(const WindowedInput& w, const DetectorConfig& c) {
  const Shape pvg{c.window, c.window_count()};
  const Shape irr{c.window, c.window_count(), kIrradianceChannels};
  if (w.pvg.shape() != pvg || w.irr.shape() != irr) {
    throw DimensionError("windowed input " + shape_string(w.pvg.shape()) + "/" +
                         shape_string(w.irr.shape()) + " does not match " + shape_string(pvg) +
                         "/" + shape_string(irr));
  }
}

Tensor stack_scaled(Detector::Batch batch, const DetectorConfig& c, bool irradiance) {
  if (batch.empty()) throw DimensionError("empty batch");
  const std::size_t per = c.window * c.window_count() * (irradiance ? kIrradianceChannels : 1);
  Shape shape = irradiance ? Shape{batch.size(), c.window, c.window_count(), kIrradianceChannels}
                           : Shape{batch.size() * c.window, c.window_count()};
  Tensor out(shape);
  const double factor = irradiance ? c.irr_scale : c.pvg_scale;
  double* dst = out.data().data();
  for (const WindowedInput* w : batch) {
    check_input(*w, c);
    const auto src = irradiance ? w->irr.data() : w->pvg.data();
    for (std::size_t i = 0; i < per; ++i) dst[i] = src[i] * factor;
    dst += per;
  }
  return out;
}

}  // namespace

Tensor Detector::scaled_pvg(Batch batch) const { return stack_scaled(batch, config_, false); }

Tensor Detector::scaled_irr(Batch batch) const { return stack_scaled(batch, config_, true); }

Var Detector::encode_pvg(Tape& tape, const std::vector<Var>& p, Batch batch) const {
  Var x = tape.constant(scaled_pvg(batch));
  return ops::lstm(tape, x, p[kPvgLstmIn], p[kPvgLstmRec], p[kPvgLstmBias], batch.size());
}

Var Detector::encode_irr(Tape& tape, const std::vector<Var>& p, Batch batch) const {
  Var x = tape.constant(scaled_irr(batch));
  Var conv = ops::tanh(tape, ops::conv2d(tape, x, p[kIrrConvKernel], p[kIrrConvBias]));
  const std::size_t rows = batch.size() * config_.window;
  Var flat = ops::reshape(tape, conv, {rows, config_.window_count() * config_.conv_channels});
  return ops::lstm(tape, flat, p[kIrrLstmIn], p[kIrrLstmRec], p[kIrrLstmBias], batch.size());
}

Var Detector::fuse(Tape& tape, const std::vector<Var>& p, Var h_pvg, Var h_irr,
                   std::size_t batch) const {
  const std::size_t h = config_.heads;
  auto attend = [&](Var x, std::size_t q, std::size_t k, std::size_t v) {
    return ops::multi_head(tape, ops::matmul(tape, x, p[q]), ops::matmul(tape, x, p[k]),
                           ops::matmul(tape, x, p[v]), h, batch);
  };
  // Stage 1: each stream attends to itself.
  Var pvg1 = attend(h_pvg, kSelfUq, kSelfUk, kSelfUv);
  Var irr1 = attend(h_irr, kSelfWq, kSelfWk, kSelfWv);
  // Stage 2: PVG queries irradiance keys/values and vice versa.
  Var q_pvg = ops::matmul(tape, pvg1, p[kCrossUq]);
  Var k_pvg = ops::matmul(tape, pvg1, p[kCrossUk]);
  Var v_pvg = ops::matmul(tape, pvg1, p[kCrossUv]);
  Var q_irr = ops::matmul(tape, irr1, p[kCrossWq]);
  Var k_irr = ops::matmul(tape, irr1, p[kCrossWk]);
  Var v_irr = ops::matmul(tape, irr1, p[kCrossWv]);
  Var pvg2 = ops::multi_head(tape, q_pvg, k_irr, v_irr, h, batch);
  Var irr2 = ops::multi_head(tape, q_irr, k_pvg, v_pvg, h, batch);
  Var fused = ops::concat_cols(tape, pvg2, irr2);
  return ops::reshape(tape, fused, {batch, config_.embedding_dim()});
}

Var Detector::embed(Tape& tape, const std::vector<Var>& p, Batch batch) const {
  return fuse(tape, p, encode_pvg(tape, p, batch), encode_irr(tape, p, batch), batch.size());
}

Var Detector::head(Tape& tape, const std::vector<Var>& p, Var embeddings) const {
  Var hidden = ops::tanh(tape, ops::affine(tape, embeddings, p[kHeadW1], p[kHeadB1]));
  Var logits = ops::affine(tape, hidden, p[kHeadW2], p[kHeadB2]);
  return ops::softmax_rows(tape, logits);
}

std::vector<std::vector<double>> Detector::embeddings(std::span<const double> params,
                                                      Batch batch) const {
  Tape tape;
  const auto p = bind(tape, params, false);
  const Tensor& e = tape.value(embed(tape, p, batch));
  const std::size_t dim = config_.embedding_dim();
  std::vector<std::vector<double>> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i].assign(e.data().begin() + i * dim, e.data().begin() + (i + 1) * dim);
  }
  return out;
}

std::vector<double> Detector::embedding(std::span<const double> params,
                                        const WindowedInput& w) const {
  const WindowedInput* one[] = {&w};
  return std::move(embeddings(params, one).front());
}

std::vector<Prediction> Detector::predict(std::span<const double> params, Batch batch) const {
  Tape tape;
  const auto p = bind(tape, params, false);
  const Tensor& probs = tape.value(head(tape, p, embed(tape, p, batch)));
  std::vector<Prediction> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = {probs.at(i, 0), probs.at(i, 1)};
  return out;
}

Prediction Detector::predict(std::span<const double> params, const WindowedInput& w) const {
  const WindowedInput* one[] = {&w};
  return predict(params, one).front();
}

Tensor encode_pvg(const Detector& model, std::span<const double> params, const WindowedInput& w) {
  Tape tape;
  const auto p = model.bind(tape, params, false);
  const WindowedInput* one[] = {&w};
  return tape.value(model.encode_pvg(tape, p, one));
}

Tensor encode_irr(const Detector& model, std::span<const double> params, const WindowedInput& w) {
  Tape tape;
  const auto p = model.bind(tape, params, false);
  const WindowedInput* one[] = {&w};
  return tape.value(model.encode_irr(tape, p, one));
}

FusionTrace co_attention_fuse(const Detector& model, std::span<const double> params,
                              const Tensor& h_pvg, const Tensor& h_irr) {
  const auto& layout = model.layout();
  const std::size_t heads = model.config().heads;
  auto w = [&](std::size_t seg) { return segment_tensor(params, layout.segment(seg)); };
  auto project = [&](const Tensor& x, std::size_t seg) { return numerics::matmul(x, w(seg)); };

  FusionTrace trace;
  auto self_pvg = numerics::multi_head(project(h_pvg, Detector::kSelfUq),
                                       project(h_pvg, Detector::kSelfUk),
                                       project(h_pvg, Detector::kSelfUv), heads);
  auto self_irr = numerics::multi_head(project(h_irr, Detector::kSelfWq),
                                       project(h_irr, Detector::kSelfWk),
                                       project(h_irr, Detector::kSelfWv), heads);
  const Tensor& pvg1 = self_pvg.output;
  const Tensor& irr1 = self_irr.output;
  auto cross_pvg = numerics::multi_head(project(pvg1, Detector::kCrossUq),
                                        project(irr1, Detector::kCrossWk),
                                        project(irr1, Detector::kCrossWv), heads);
  auto cross_irr = numerics::multi_head(project(irr1, Detector::kCrossWq),
                                        project(pvg1, Detector::kCrossUk),
                                        project(pvg1, Detector::kCrossUv), heads);
  trace.self_pvg = std::move(self_pvg.weights);
  trace.self_irr = std::move(self_irr.weights);
  trace.cross_pvg = std::move(cross_pvg.weights);
  trace.cross_irr = std::move(cross_irr.weights);

  const std::size_t rows = cross_pvg.output.dim(0);
  const std::size_t d = cross_pvg.output.dim(1);
  trace.embedding.reserve(rows * 2 * d);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto a = cross_pvg.output.data().subspan(r * d, d);
    const auto b = cross_irr.output.data().subspan(r * d, d);
    trace.embedding.insert(trace.embedding.end(), a.begin(), a.end());
    trace.embedding.insert(trace.embedding.end(), b.begin(), b.end());
  }
  return trace;
}

Prediction predict(const Detector& model, std::span<const double> params,
                   std::span<const double> embedding) {
  const std::size_t dim = model.config().embedding_dim();
  if (embedding.size() != dim) {
    throw DimensionError("embedding length " + std::to_string(embedding.size()) +
                         " does not match D^p = " + std::to_string(dim));
  }
  Tape tape;
  const auto p = model.bind(tape, params, false);
  Var e = tape.constant(Tensor({1, dim}, std::vector<double>(embedding.begin(), embedding.end())));
  const Tensor& probs = tape.value(model.head(tape, p, e));
  return Prediction{probs[0], probs[1]};
}

PrototypeSet compute_local_prototypes(const std::vector<std::vector<double>>& embeddings,
                                      std::span<const int> labels) {
  if (embeddings.size() != labels.size()) {
    throw DimensionError("prototype inputs: " + std::to_string(embeddings.size()) +
                         " embeddings, " + std::to_string(labels.size()) + " labels");
  }
  PrototypeSet protos;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    Prototype& p = protos[labels[i]];
    if (p.mean.empty()) p.mean.assign(embeddings[i].size(), 0.0);
    if (p.mean.size() != embeddings[i].size()) throw DimensionError("ragged embeddings");
    for (std::size_t j = 0; j < p.mean.size(); ++j) p.mean[j] += embeddings[i][j];
    ++p.count;
  }
  for (auto& [label, p] : protos) {
    const double inv = 1.0 / static_cast<double>(p.count);
    for (auto& v : p.mean) v *= inv;
  }
  return protos;
}

namespace {

void check_class_sets(const std::vector<int>& local_classes, const GlobalPrototypes& global) {
  for (int k : local_classes) {
    if (!global.contains(k)) {
      throw ProtocolError("local prototype for class " + std::to_string(k) +
                          " has no global counterpart");
    }
  }
}

}  // namespace

double prototype_regularizer(const PrototypeSet& local, const GlobalPrototypes& global) {
  std::vector<int> classes;
  for (const auto& [k, p] : local) classes.push_back(k);
  check_class_sets(classes, global);
  double reg = 0.0;
  for (const auto& [k, g] : global) {
    auto it = local.find(k);
    const std::vector<double> zeros(g.size(), 0.0);
    const std::vector<double>& mine = it == local.end() ? zeros : it->second.mean;
    reg += 1.0 - numerics::cosine_similarity(mine, g);
  }
  return reg;
}

double local_loss(const Tensor& probs, std::span<const int> labels, const PrototypeSet& local,
                  const GlobalPrototypes* global, double lambda) {
  const double ce = numerics::cross_entropy(probs, labels);
  if (global == nullptr) return ce;
  return ce + lambda * prototype_regularizer(local, *global);
}

BatchEvaluation evaluate_batch(const Detector& model, std::span<const double> params,
                               std::span<const Sample* const> batch,
                               const GlobalPrototypes* global, double lambda) {
  if (batch.empty()) throw DimensionError("empty batch");
  Tape tape;
  const auto p = model.bind(tape, params);
  std::vector<const WindowedInput*> inputs;
  std::vector<int> labels;
  inputs.reserve(batch.size());
  for (const Sample* s : batch) {
    inputs.push_back(&s->input);
    labels.push_back(s->label);
  }
  Var embeddings = model.embed(tape, p, inputs);
  Var probs = model.head(tape, p, embeddings);
  Var ce = ops::cross_entropy(tape, probs, labels);
  Var total = ce;

  if (global != nullptr && lambda != 0.0) {
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    std::vector<int> classes;
    for (const auto& [k, idx] : members) classes.push_back(k);
    check_class_sets(classes, *global);

    std::vector<Var> terms{ce};
    std::vector<double> weights{1.0};
    double offset = 0.0;
    for (const auto& [k, g] : *global) {
      offset += lambda;
      auto it = members.find(k);
      if (it == members.end()) {
        // Locally absent class: zero local prototype, constant contribution.
        const std::vector<double> zeros(g.size(), 0.0);
        offset -= lambda * numerics::cosine_similarity(zeros, g);
        continue;
      }
      Var local = ops::mean_of_rows(tape, embeddings, it->second);
      Var target = tape.constant(Tensor::vector(g));
      terms.push_back(ops::cosine_similarity(tape, local, target));
      weights.push_back(-lambda);
    }
    total = ops::weighted_sum(tape, terms, weights, offset);
  }

  BatchEvaluation out;
  out.loss = tape.value(total)[0];
  out.cross_entropy = tape.value(ce)[0];
  out.gradient.assign(params.size(), 0.0);
  if (std::isfinite(out.loss)) {
    tape.backward(total);
    tape.accumulate_parameter_grads(out.gradient);
  }
  return out;
}

EpochResult train_epoch(const Detector& model, std::span<double> params,
                        std::span<const Sample> data, const TrainOptions& options,
                        const GlobalPrototypes* global, std::uint64_t shuffle_seed) {
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  EpochResult result;
  if (data.empty()) return result;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed);
  rng.shuffle(std::span<std::size_t>(order));

  double loss_sum = 0.0;
  double ce_sum = 0.0;
  std::vector<const Sample*> batch;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    const std::size_t end = std::min(order.size(), start + options.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);

    const BatchEvaluation eval = evaluate_batch(model, params, batch, global, options.lambda);
    if (!std::isfinite(eval.loss)) {
      throw DivergenceError("non-finite loss " + std::to_string(eval.loss) + " at batch " +
                            std::to_string(result.batches) + " (samples " +
                            std::to_string(start) + ".." + std::to_string(end - 1) +
                            ", cross-entropy " + std::to_string(eval.cross_entropy) + ")");
    }
    for (std::size_t j = 0; j < params.size(); ++j) {
      params[j] -= options.learning_rate * eval.gradient[j];
    }
    const auto n = static_cast<double>(batch.size());
    loss_sum += eval.loss * n;
    ce_sum += eval.cross_entropy * n;
    ++result.batches;
  }
  result.loss = loss_sum / static_cast<double>(data.size());
  result.cross_entropy = ce_sum / static_cast<double>(data.size());
  return result;
}

std::vector<std::vector<double>> embed_all(const Detector& model, std::span<const double> params,
                                           std::span<const Sample> data, std::size_t chunk) {
  std::vector<std::vector<double>> out;
  out.reserve(data.size());
  std::vector<const WindowedInput*> inputs;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    inputs.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + chunk); ++i) {
      inputs.push_back(&data[i].input);
    }
    for (auto& e : model.embeddings(params, inputs)) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace pvfd::detector
