#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "primitive_gradcheck.hpp"
#include "pvfd/detector.hpp"
#include "pvfd/error.hpp"
#include "pvfd/grad_check.hpp"
#include "pvfd/numerics.hpp"

using namespace pvfd;
using namespace pvfd::detector;
using namespace pvfd::testing;

namespace {

DetectorConfig tiny_config() {
  DetectorConfig c;
  c.slots = 8;
  c.window = 4;
  c.stride = 2;
  c.d_lstm = 4;
  c.d_cnn_lstm = 4;
  c.d_sa = 4;
  c.d_ca = 4;
  c.heads = 2;
  c.conv_channels = 2;
  c.mlp_hidden = 5;
  return c;
}

Tensor random_irr(std::size_t slots, Rng& rng) { return random_tensor({slots, 3}, rng, 0.0, 800.0); }

std::vector<double> random_pvg(std::size_t slots, Rng& rng) {
  std::vector<double> v(slots);
  for (auto& x : v) x = rng.uniform(0.0, 3.0);
  return v;
}

Sample random_sample(const DetectorConfig& c, Rng& rng, int label) {
  const auto pvg = random_pvg(c.slots, rng);
  return Sample{segment_day(pvg, random_irr(c.slots, rng), c.window, c.stride), label};
}

std::vector<double> random_params(const Detector& model, std::uint64_t seed) {
  Rng base(seed), head(seed + 1);
  return model.init_params(base, head);
}

Tensor segment(const Detector& model, std::span<const double> params, std::size_t index) {
  return segment_tensor(params, model.layout().segment(index));
}

std::vector<const Sample*> pointers(const std::vector<Sample>& data) {
  std::vector<const Sample*> out;
  for (const auto& s : data) out.push_back(&s);
  return out;
}

}  // namespace

TEST_CASE("segment_day start slots") {
  Rng rng(1);
  std::vector<double> pvg(48);
  std::iota(pvg.begin(), pvg.end(), 0.0);
  const Tensor irr = random_irr(48, rng);

  const auto w = segment_day(pvg, irr, 24, 6);
  REQUIRE(w.pvg.shape() == Shape{24, 5});
  REQUIRE(w.irr.shape() == Shape{24, 5, 3});
  const std::vector<double> starts{0, 6, 12, 18, 24};
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(w.pvg.at(0, k) == starts[k]);
    CHECK(w.pvg.at(23, k) == starts[k] + 23);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(w.irr[(5 * 5 + k) * 3 + c] == irr.at(starts[k] + 5, c));
    }
  }

  const auto whole = segment_day(pvg, irr, 48, 6);
  CHECK(whole.pvg.shape() == Shape{48, 1});
  CHECK(std::equal(pvg.begin(), pvg.end(), whole.pvg.data().begin()));

  const auto disjoint = segment_day(pvg, irr, 24, 24);
  CHECK(disjoint.pvg.shape() == Shape{24, 2});
  CHECK(disjoint.pvg.at(0, 1) == 24.0);

  CHECK_THROWS_AS(segment_day(pvg, irr, 24, 5), ConfigError);
  CHECK_THROWS_AS(segment_day(pvg, irr, 49, 1), ConfigError);
}

TEST_CASE("config validation") {
  DetectorConfig c;
  CHECK(c.window_count() == 5);
  CHECK(c.embedding_dim() == 6144);
  c.stride = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DetectorConfig{};
  c.heads = 3;
  CHECK_THROWS_AS(Detector{c}, ConfigError);
}

TEST_CASE("layout partitions base and head") {
  const Detector model(tiny_config());
  const auto& layout = model.layout();
  CHECK(layout.segments().size() == Detector::kSegmentCount);
  CHECK(layout.base_count() + layout.head_count() == model.parameter_count());
  for (std::size_t i = 0; i < Detector::kSegmentCount; ++i) {
    CHECK((layout.segment(i).group == ParamGroup::kHead) == (i >= Detector::kHeadW1));
  }
}

TEST_CASE("encoders: zeros, shapes, oracles") {
  const Detector defaults{DetectorConfig{}};
  const std::vector<double> zeros(defaults.parameter_count(), 0.0);
  const auto zero_day = segment_day(std::vector<double>(48, 0.0), Tensor({48, 3}), 24, 6);
  const Tensor hp = encode_pvg(defaults, zeros, zero_day);
  const Tensor hi = encode_irr(defaults, zeros, zero_day);
  CHECK(hp.shape() == Shape{24, 128});
  CHECK(hi.shape() == Shape{24, 128});
  CHECK(std::all_of(hp.data().begin(), hp.data().end(), [](double v) { return v == 0.0; }));
  CHECK(std::all_of(hi.data().begin(), hi.data().end(), [](double v) { return v == 0.0; }));

  const DetectorConfig c = tiny_config();
  const Detector model(c);
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto params = random_params(model, 100 + trial);
    const Sample s = random_sample(c, rng, kNormal);

    const Tensor got_pvg = encode_pvg(model, params, s.input);
    const Tensor want_pvg = oracle_lstm(s.input.pvg, segment(model, params, Detector::kPvgLstmIn),
                                        segment(model, params, Detector::kPvgLstmRec),
                                        segment(model, params, Detector::kPvgLstmBias));
    CHECK(max_abs_diff(got_pvg, want_pvg) < 1e-12);

    // Conv stage against the direct-convolution oracle, then the recurrence.
    Tensor irr = s.input.irr;
    for (auto& v : irr.data()) v *= c.irr_scale;
    Tensor conv = oracle_conv2d(irr, segment(model, params, Detector::kIrrConvKernel),
                                segment(model, params, Detector::kIrrConvBias));
    for (auto& v : conv.data()) v = std::tanh(v);
    const Tensor flat = conv.reshaped({c.window, c.window_count() * c.conv_channels});
    const Tensor want_irr = oracle_lstm(flat, segment(model, params, Detector::kIrrLstmIn),
                                        segment(model, params, Detector::kIrrLstmRec),
                                        segment(model, params, Detector::kIrrLstmBias));
    CHECK(max_abs_diff(encode_irr(model, params, s.input), want_irr) < 1e-12);
  }
}

namespace {

// Single-head attention over two rows of width two, written out term by term.
Tensor unrolled_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  Tensor out({2, 2});
  const double r = 1.0 / std::sqrt(2.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const double s0 = (q.at(i, 0) * k.at(0, 0) + q.at(i, 1) * k.at(0, 1)) * r;
    const double s1 = (q.at(i, 0) * k.at(1, 0) + q.at(i, 1) * k.at(1, 1)) * r;
    const double a0 = 1.0 / (1.0 + std::exp(s1 - s0));
    const double a1 = 1.0 / (1.0 + std::exp(s0 - s1));
    out.at(i, 0) = a0 * v.at(0, 0) + a1 * v.at(1, 0);
    out.at(i, 1) = a0 * v.at(0, 1) + a1 * v.at(1, 1);
  }
  return out;
}

Tensor mul22(const Tensor& a, const Tensor& b) {
  Tensor out({2, 2});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) out.at(i, j) = a.at(i, 0) * b.at(0, j) + a.at(i, 1) * b.at(1, j);
  }
  return out;
}

}  // namespace

TEST_CASE("co-attention matches the unrolled two-step oracle") {
  DetectorConfig c;
  c.slots = 2;
  c.window = 2;
  c.stride = 1;
  c.d_lstm = c.d_cnn_lstm = c.d_sa = c.d_ca = 2;
  c.heads = 1;
  c.mlp_hidden = 2;
  const Detector model(c);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto params = random_params(model, 300 + trial);
    const Tensor hg = random_tensor({2, 2}, rng);
    const Tensor hi = random_tensor({2, 2}, rng);
    auto w = [&](std::size_t s) { return segment(model, params, s); };

    const Tensor g1 = unrolled_attention(mul22(hg, w(Detector::kSelfUq)), mul22(hg, w(Detector::kSelfUk)),
                                         mul22(hg, w(Detector::kSelfUv)));
    const Tensor i1 = unrolled_attention(mul22(hi, w(Detector::kSelfWq)), mul22(hi, w(Detector::kSelfWk)),
                                         mul22(hi, w(Detector::kSelfWv)));
    const Tensor g2 = unrolled_attention(mul22(g1, w(Detector::kCrossUq)), mul22(i1, w(Detector::kCrossWk)),
                                         mul22(i1, w(Detector::kCrossWv)));
    const Tensor i2 = unrolled_attention(mul22(i1, w(Detector::kCrossWq)), mul22(g1, w(Detector::kCrossUk)),
                                         mul22(g1, w(Detector::kCrossUv)));
    const std::vector<double> want{g2.at(0, 0), g2.at(0, 1), i2.at(0, 0), i2.at(0, 1),
                                   g2.at(1, 0), g2.at(1, 1), i2.at(1, 0), i2.at(1, 1)};

    const FusionTrace trace = co_attention_fuse(model, params, hg, hi);
    REQUIRE(trace.embedding.size() == 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(trace.embedding[j] - want[j]) < 1e-12);

    // The taped path agrees with the forward-only trace.
    Tape tape;
    const auto p = model.bind(tape, params, false);
    const Tensor& taped = tape.value(model.fuse(tape, p, tape.constant(hg), tape.constant(hi)));
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(taped[j] - want[j]) < 1e-12);
  }
}

TEST_CASE("co-attention properties at default widths") {
  const Detector model{DetectorConfig{}};
  auto params = random_params(model, 17);
  Rng rng(4);
  const Tensor hg = random_tensor({24, 128}, rng);
  const Tensor hi = random_tensor({24, 128}, rng);

  const FusionTrace trace = co_attention_fuse(model, params, hg, hi);
  CHECK(trace.embedding.size() == 6144);
  for (const auto* maps : {&trace.self_pvg, &trace.self_irr, &trace.cross_pvg, &trace.cross_irr}) {
    REQUIRE(maps->size() == 4);
    for (const Tensor& a : *maps) {
      for (std::size_t r = 0; r < a.dim(0); ++r) {
        double sum = 0.0;
        for (std::size_t col = 0; col < a.dim(1); ++col) sum += a.at(r, col);
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }

  for (auto s : {Detector::kSelfUv, Detector::kSelfWv, Detector::kCrossUv, Detector::kCrossWv}) {
    const auto& seg = model.layout().segment(s);
    std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(seg.offset), seg.length, 0.0);
  }
  const FusionTrace zeroed = co_attention_fuse(model, params, hg, hi);
  REQUIRE(zeroed.embedding.size() == 6144);
  CHECK(std::all_of(zeroed.embedding.begin(), zeroed.embedding.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("predict") {
  const Detector model(tiny_config());
  const std::size_t dim = model.config().embedding_dim();
  std::vector<double> params(model.parameter_count(), 0.0);
  Rng rng(2);
  std::vector<double> e(dim);
  for (auto& v : e) v = rng.uniform(-2, 2);

  const Prediction flat = predict(model, params, e);
  CHECK(flat.prob_normal == 0.5);
  CHECK(flat.prob_fraud == 0.5);

  // Logits (0, ln 3) through the output bias alone.
  params[model.layout().segment(Detector::kHeadB2).offset + 1] = std::log(3.0);
  const Prediction skewed = predict(model, params, e);
  CHECK(std::abs(skewed.prob_normal - 0.25) < 1e-12);
  CHECK(std::abs(skewed.prob_fraud - 0.75) < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(model, 500 + trial);
    for (auto& v : e) v = rng.uniform(-50, 50);
    const Prediction pr = predict(model, p, e);
    CHECK(pr.prob_normal >= 0.0);
    CHECK(pr.prob_fraud >= 0.0);
    CHECK(std::abs(pr.prob_normal + pr.prob_fraud - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(predict(model, params, std::vector<double>(dim + 1)), DimensionError);
}

TEST_CASE("local_loss") {
  const Tensor probs = Tensor::matrix({{0.8, 0.2}, {0.3, 0.7}});
  const std::vector<int> labels{0, 1};
  const double ce = numerics::cross_entropy(probs, labels);

  PrototypeSet local;
  local[0] = {{1.0, 0.0}, 1};
  local[1] = {{0.0, 1.0}, 1};
  const GlobalPrototypes same{{0, {1.0, 0.0}}, {1, {0.0, 1.0}}};
  const GlobalPrototypes orthogonal{{0, {0.0, 1.0}}, {1, {1.0, 0.0}}};

  CHECK(local_loss(probs, labels, local, &same, 1.0) == ce);
  CHECK(std::abs(local_loss(probs, labels, local, &orthogonal, 1.0) - (ce + 2.0)) < 1e-12);
  CHECK(local_loss(probs, labels, local, &orthogonal, 0.0) == ce);
  CHECK(local_loss(probs, labels, local, nullptr, 1.0) == ce);

  const GlobalPrototypes only_normal{{0, {1.0, 0.0}}};
  CHECK_THROWS_AS(local_loss(probs, labels, local, &only_normal, 1.0), ProtocolError);
}

TEST_CASE("local prototypes") {
  const std::vector<std::vector<double>> one{{1, 2}, {3, 4}};
  const std::vector<int> both{0, 1};
  const auto p = compute_local_prototypes(one, both);
  CHECK(p.at(0).mean == std::vector<double>{1, 2});
  CHECK(p.at(1).mean == std::vector<double>{3, 4});

  const std::vector<std::vector<double>> pair{{1, 0}, {3, 0}};
  const std::vector<int> same{1, 1};
  const auto q = compute_local_prototypes(pair, same);
  CHECK(q.size() == 1);
  CHECK(q.at(1).mean == std::vector<double>{2, 0});
  CHECK(q.at(1).count == 2);

  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(40), d = 1 + rng.below(6);
    std::vector<std::vector<double>> e(n, std::vector<double>(d));
    std::vector<int> labels(n);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.below(2));
      for (auto& v : e[i]) v = rng.uniform(-5, 5);
      for (std::size_t j = 0; j < d; ++j) mean[j] += e[i][j] / static_cast<double>(n);
    }
    const auto protos = compute_local_prototypes(e, labels);
    std::vector<double> pooled(d, 0.0);
    for (const auto& [k, pr] : protos) {
      for (std::size_t j = 0; j < d; ++j) pooled[j] += pr.mean[j] * static_cast<double>(pr.count) / static_cast<double>(n);
    }
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(pooled[j] - mean[j]) < 1e-12);
  }
}

TEST_CASE("train_epoch") {
  const DetectorConfig c = tiny_config();
  const Detector model(c);
  Rng rng(21);
  std::vector<Sample> data;
  for (int i = 0; i < 10; ++i) data.push_back(random_sample(c, rng, i % 3 == 0 ? kFraud : kNormal));

  SUBCASE("zero learning rate leaves parameters unchanged") {
    auto params = random_params(model, 1);
    const auto before = params;
    TrainOptions opt{0.0, 4, 1.0};
    const GlobalPrototypes global{{0, std::vector<double>(c.embedding_dim(), 0.1)},
                                  {1, std::vector<double>(c.embedding_dim(), -0.1)}};
    const auto r = train_epoch(model, params, data, opt, &global, 3);
    CHECK(params == before);
    CHECK(r.batches == 3);
  }

  SUBCASE("one small step lowers the batch loss") {
    const auto batch = pointers(data);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto params = random_params(model, 40 + seed);
      const auto before = evaluate_batch(model, params, batch, nullptr, 0.0);
      TrainOptions opt{1e-2, data.size(), 0.0};
      train_epoch(model, params, data, opt, nullptr, seed);
      const auto after = evaluate_batch(model, params, batch, nullptr, 0.0);
      CHECK(after.loss < before.loss);
    }
  }

  SUBCASE("identical seeds give identical trajectories") {
    auto a = random_params(model, 7);
    auto b = a;
    TrainOptions opt{1e-2, 3, 1.0};
    const GlobalPrototypes global{{0, std::vector<double>(c.embedding_dim(), 0.2)},
                                  {1, std::vector<double>(c.embedding_dim(), -0.3)}};
    for (int epoch = 0; epoch < 3; ++epoch) {
      const auto ra = train_epoch(model, a, data, opt, &global, 99 + epoch);
      const auto rb = train_epoch(model, b, data, opt, &global, 99 + epoch);
      CHECK(ra.loss == rb.loss);
    }
    CHECK(a == b);
  }

  SUBCASE("lambda zero matches plain cross-entropy training") {
    auto a = random_params(model, 8);
    auto b = a;
    const GlobalPrototypes global{{0, std::vector<double>(c.embedding_dim(), 0.2)},
                                  {1, std::vector<double>(c.embedding_dim(), -0.3)}};
    train_epoch(model, a, data, TrainOptions{1e-2, 4, 0.0}, &global, 5);
    train_epoch(model, b, data, TrainOptions{1e-2, 4, 1.0}, nullptr, 5);
    CHECK(a == b);
  }

  SUBCASE("non-finite loss aborts") {
    auto params = random_params(model, 9);
    params[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_epoch(model, params, data, TrainOptions{1e-2, 4, 0.0}, nullptr, 1),
                    DivergenceError);
  }
}

TEST_CASE("end-to-end gradient on a two-sample batch") {
  const DetectorConfig c = tiny_config();
  const Detector model(c);
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Sample> data{random_sample(c, rng, kNormal), random_sample(c, rng, kFraud)};
    const auto batch = pointers(data);
    GlobalPrototypes global;
    for (int k = 0; k < 2; ++k) {
      std::vector<double> g(c.embedding_dim());
      for (auto& v : g) v = rng.uniform(-1, 1);
      global[k] = g;
    }
    const auto params = random_params(model, 600 + trial);
    auto f = [&](std::span<const double> x) { return evaluate_batch(model, x, batch, &global, 1.0).loss; };
    auto g = [&](std::span<const double> x) { return evaluate_batch(model, x, batch, &global, 1.0).gradient; };
    const auto report = grad_check(f, g, params, 1e-3, 1e-4, {}, kFdFloor);
    INFO("worst index " << report.worst_index << " rel " << report.worst_relative_error << " analytic "
                        << report.analytic_at_worst << " numeric " << report.numeric_at_worst);
    CHECK(report.passed);
    CHECK(report.checked == params.size());
  }
}
