#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pvfd/tensor.hpp"

// Forward-only reference forms of the differentiable primitives. The tape
// operations in ops.hpp call into these for their forward values.

namespace pvfd::numerics {

// x[m x p] * W[p x q] + b[q]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& x, const Tensor& w);

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);

// Same-padded 2-D cross-correlation. x: [H x W x Cin] or a batch
// [B x H x W x Cin], kernels: [k x k x Cin x Cout], bias: [Cout] or empty
// tensor. k must be odd.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias = {});

struct LstmWeights {
  const Tensor& input;      // [d_in x 4h], gate blocks i, f, g, o
  const Tensor& recurrent;  // [h x 4h]
  const Tensor& bias;       // [4h]
};

// Full hidden-state sequence [T x h] from a zero initial state. With
// sequences = B, x stacks B equal-length sequences (row b*T + t) that run
// independently; the output uses the same row order.
Tensor lstm_forward(const Tensor& x, const LstmWeights& w, std::size_t sequences = 1);

struct AttentionResult {
  Tensor weights;  // [Tq x Tk]
  Tensor output;   // [Tq x d_v]
};

// softmax(Q K^T / sqrt(d)) V
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct MultiHeadResult {
  std::vector<Tensor> weights;  // one [blocks*Tq x Tk] per head
  Tensor output;                // [blocks*Tq x d_v]
};

// Splits the feature axis of Q, K, V into `heads` equal slices, attends per
// slice, and concatenates the outputs in head order. With blocks = B the rows
// form B independent equal-size groups (one per sample).
MultiHeadResult multi_head(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           std::size_t blocks = 1);

inline constexpr double kLogClamp = 1e-12;

// Mean of -ln(max(p[i, label_i], 1e-12)).
double cross_entropy(const Tensor& probs, std::span<const int> labels);

// a.b / (|a| |b|); 1 when both vectors are zero, 0 when exactly one is.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace pvfd::numerics
