#include "pvfd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pvfd/error.hpp"
#include "pvfd/kernels.hpp"
#include "numerics_detail.hpp"

namespace pvfd::numerics {

using detail::require;

Tensor matmul(const Tensor& x, const Tensor& w) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0), "matmul", x, w);
  Tensor out({x.dim(0), w.dim(1)});
  kernels::active().gemm_nn(x.dim(0), x.dim(1), w.dim(1), x.data().data(), w.data().data(),
                            out.data().data());
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0), "affine", x, w);
  require(b.size() == w.dim(1), "affine bias", w, b);
  const std::size_t m = x.dim(0);
  const std::size_t q = w.dim(1);
  Tensor out({m, q});
  for (std::size_t i = 0; i < m; ++i) std::copy(b.data().begin(), b.data().end(), &out.at(i, 0));
  kernels::active().gemm_nn(m, x.dim(1), q, x.data().data(), w.data().data(), out.data().data());
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = x;
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < m; ++i) detail::softmax_inplace(&out.data()[i * n], n);
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  require((x.rank() == 3 || x.rank() == 4) && kernels.rank() == 4, "conv2d", x, kernels);
  const std::size_t lead = x.rank() - 3;
  require(kernels.dim(2) == x.dim(lead + 2), "conv2d channels", x, kernels);
  require(kernels.dim(0) == kernels.dim(1) && kernels.dim(0) % 2 == 1, "conv2d odd square kernel",
          x, kernels);
  const std::size_t c_out = kernels.dim(3);
  if (bias.size() != 0) require(bias.size() == c_out, "conv2d bias", kernels, bias);
  Shape shape = x.shape();
  shape.back() = c_out;
  const std::size_t pixels = x.size() / x.dim(lead + 2);
  const Tensor patches = detail::im2col(x, kernels.dim(0));
  Tensor out(shape);
  if (bias.size() != 0) {
    for (std::size_t p = 0; p < pixels; ++p) {
      std::copy(bias.data().begin(), bias.data().end(), out.data().begin() + p * c_out);
    }
  }
  kernels::active().gemm_nn(pixels, patches.dim(1), c_out, patches.data().data(),
                            kernels.data().data(), out.data().data());
  return out;
}

Tensor lstm_forward(const Tensor& x, const LstmWeights& w, std::size_t sequences) {
  return detail::lstm_output(detail::lstm_run(x, w.input, w.recurrent, w.bias, sequences));
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require(q.rank() == 2 && k.rank() == 2 && q.dim(1) == k.dim(1), "attention Q/K", q, k);
  require(v.rank() == 2 && v.dim(0) == k.dim(0), "attention K/V", k, v);
  AttentionResult result{Tensor({q.dim(0), k.dim(0)}), Tensor({q.dim(0), v.dim(1)})};
  detail::attention_forward({q.data().data(), q.dim(1)}, {k.data().data(), k.dim(1)},
                            {v.data().data(), v.dim(1)}, q.dim(0), k.dim(0), q.dim(1), v.dim(1),
                            result.weights.data().data(), result.output.data().data(), v.dim(1));
  return result;
}

MultiHeadResult multi_head(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           std::size_t blocks) {
  require(q.rank() == 2 && k.rank() == 2 && q.dim(1) == k.dim(1), "attention Q/K", q, k);
  require(v.rank() == 2 && v.dim(0) == k.dim(0), "attention K/V", k, v);
  detail::check_heads(q.dim(1), v.dim(1), heads);
  if (blocks == 0 || q.dim(0) % blocks != 0 || k.dim(0) % blocks != 0) {
    throw DimensionError("attention: rows " + std::to_string(q.dim(0)) + "/" +
                         std::to_string(k.dim(0)) + " do not split into " +
                         std::to_string(blocks) + " blocks");
  }
  MultiHeadResult result;
  result.output = Tensor({q.dim(0), v.dim(1)});
  result.weights.assign(heads, Tensor({q.dim(0), k.dim(0) / blocks}));
  detail::multi_head_forward(q, k, v, heads, blocks, result.weights, result.output);
  return result;
}

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
  const std::size_t n = probs.rows();
  const std::size_t classes = probs.cols();
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_string(probs.shape()) + " probabilities");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    total -= std::log(std::max(probs.at(i, static_cast<std::size_t>(labels[i])), kLogClamp));
  }
  return total / static_cast<double>(n);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  const auto& kt = kernels::active();
  const double na = std::sqrt(kt.dot(a.data(), a.data(), a.size()));
  const double nb = std::sqrt(kt.dot(b.data(), b.data(), b.size()));
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kt.dot(a.data(), b.data(), a.size()) / (na * nb);
}

}  // namespace pvfd::numerics
