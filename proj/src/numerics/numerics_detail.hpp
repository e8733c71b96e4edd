#pragma once

// Shared forward/backward building blocks for numerics.cpp and ops.cpp.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pvfd/error.hpp"
#include "pvfd/tensor.hpp"

namespace pvfd::numerics::detail {

inline void require(bool ok, const char* what, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw DimensionError(std::string(what) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
}

void check_heads(std::size_t d_qk, std::size_t d_v, std::size_t heads);

void softmax_inplace(double* row, std::size_t n);

// dx = y * (dy - sum(dy * y)), accumulated into dx.
void softmax_backward_row(const double* y, const double* dy, double* dx, std::size_t n);

// [H x W x C] -> [(H*W) x (k*k*C)] same-padded patches, (dy, dx, c) order.
// A leading batch axis [B x H x W x C] stacks the per-image patch rows.
Tensor im2col(const Tensor& x, std::size_t k);

// Scatter-adds patch gradients back onto an [H x W x C] (or batched) gradient.
void col2im_add(const Tensor& dpatches, std::size_t k, Tensor& dx);

// Row order helpers for B sequences of equal length stored sample-major
// (row b*T + t) versus time-major (row t*B + b).
Tensor to_time_major(const Tensor& x, std::size_t sequences);
void add_from_time_major(const Tensor& src, std::size_t sequences, Tensor& dst);

// All tensors are time-major: row t*B + b.
struct LstmCache {
  std::size_t sequences = 1;
  Tensor hidden;     // [T*B x h]
  Tensor cell;       // [T*B x h]
  Tensor tanh_cell;  // [T*B x h]
  Tensor gates;      // [T*B x 4h] activated i, f, g, o
};

// x holds `sequences` equal-length sequences, sample-major.
LstmCache lstm_run(const Tensor& x, const Tensor& w_in, const Tensor& w_rec, const Tensor& bias,
                   std::size_t sequences = 1);

// Hidden states in the input's sample-major order.
Tensor lstm_output(const LstmCache& cache);

// d_hidden and dx are sample-major. Accumulates into any non-null output.
void lstm_backward(const LstmCache& cache, const Tensor& x, const Tensor& w_in,
                   const Tensor& w_rec, const Tensor& d_hidden, Tensor* dx, Tensor* dw_in,
                   Tensor* dw_rec, Tensor* dbias);

// Row-strided read-only and writable matrix views.
struct Strided {
  const double* p;
  std::size_t ld;
};
struct Slot {
  double* p;
  std::size_t ld;
};

// weights is a contiguous [tq x tk]; out rows are overwritten.
void attention_forward(const Strided& q, const Strided& k, const Strided& v, std::size_t tq,
                       std::size_t tk, std::size_t d, std::size_t dv, double* weights,
                       double* out, std::size_t ldo);

// Accumulates into dq, dk, dv; a null slot is skipped.
void attention_backward(const Strided& q, const Strided& k, const Strided& v,
                        const double* weights, const Strided& dout, std::size_t tq,
                        std::size_t tk, std::size_t d, std::size_t dv, const Slot& dq,
                        const Slot& dk, const Slot& dvo, std::vector<double>& scratch);

// Rows split into `blocks` equal groups; attention never crosses a group.
// weights[h] is [blocks*Tq x Tk].
void multi_head_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                        std::size_t blocks, std::vector<Tensor>& weights, Tensor& out);

void multi_head_backward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         std::size_t blocks, const std::vector<Tensor>& weights,
                         const Tensor& dout, Tensor* dq, Tensor* dk, Tensor* dv);

}  // namespace pvfd::numerics::detail
