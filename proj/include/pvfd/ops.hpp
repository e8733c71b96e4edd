#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pvfd/tape.hpp"

// Differentiable operations recorded on a Tape. Forward values come from the
// reference forms in numerics.hpp; each op supplies its vector-Jacobian product.

namespace pvfd::ops {

Var matmul(Tape& t, Var x, Var w);
Var affine(Tape& t, Var x, Var w, Var b);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double factor);
Var tanh(Tape& t, Var x);
Var softmax_rows(Tape& t, Var x);

// x: [H x W x Cin] or [B x H x W x Cin], kernels: [k x k x Cin x Cout], bias: [Cout].
Var conv2d(Tape& t, Var x, Var kernels, Var bias);

// x: [T x d_in] -> [T x h]; with sequences = B, x is [B*T x d_in] holding B
// independent sequences back to back.
Var lstm(Tape& t, Var x, Var w_in, Var w_rec, Var bias, std::size_t sequences = 1);

// Single-head scaled dot-product attention output.
Var scaled_dot_attention(Tape& t, Var q, Var k, Var v);
// `blocks` splits the rows into independent per-sample groups.
Var multi_head(Tape& t, Var q, Var k, Var v, std::size_t heads, std::size_t blocks = 1);

// Concatenates two row-aligned matrices along the feature axis.
Var concat_cols(Tape& t, Var a, Var b);
Var reshape(Tape& t, Var x, Shape shape);

// Stacks equally sized tensors as rows of an [n x size] matrix.
Var stack_rows(Tape& t, std::span<const Var> rows);

// Mean of the selected rows of a matrix, as a [cols] vector.
Var mean_of_rows(Tape& t, Var x, std::span<const std::size_t> rows);

// Mean clamped negative log-likelihood; scalar [1].
Var cross_entropy(Tape& t, Var probs, std::span<const int> labels);

// Scalar [1]; zero-norm policy as in numerics::cosine_similarity, with zero
// gradient on the degenerate branches.
Var cosine_similarity(Tape& t, Var a, Var b);

// sum_i weights[i] * terms[i] for scalar terms, plus `offset`.
Var weighted_sum(Tape& t, std::span<const Var> terms, std::span<const double> weights,
                 double offset = 0.0);

}  // namespace pvfd::ops
