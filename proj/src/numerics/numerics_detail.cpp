#include "numerics_detail.hpp"

#include <algorithm>
#include <cmath>

#include "pvfd/kernels.hpp"

namespace pvfd::numerics::detail {

void check_heads(std::size_t d_qk, std::size_t d_v, std::size_t heads) {
  if (heads == 0 || d_qk % heads != 0 || d_v % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d_qk) + "/" + std::to_string(d_v) +
                      " not divisible by head count " + std::to_string(heads));
  }
}

void softmax_inplace(double* row, std::size_t n) {
  const double peak = *std::max_element(row, row + n);
  for (std::size_t j = 0; j < n; ++j) row[j] -= peak;
  kernels::active().exp_inplace(row, n);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += row[j];
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

void softmax_backward_row(const double* y, const double* dy, double* dx, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += dy[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - s);
}

namespace {

struct Grid {
  std::size_t batch, h, w, c;
};

Grid grid_of(const Tensor& x) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  return {1, x.dim(0), x.dim(1), x.dim(2)};
}

}  // namespace

Tensor im2col(const Tensor& x, std::size_t k) {
  const Grid g = grid_of(x);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  Tensor patches({g.batch * g.h * g.w, k * k * g.c});
  double* dst = patches.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* src = x.data().data() + b * g.h * g.w * g.c;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        for (std::ptrdiff_t dy = 0; dy < static_cast<std::ptrdiff_t>(k); ++dy) {
          const auto sy = y + dy - r;
          for (std::ptrdiff_t dx = 0; dx < static_cast<std::ptrdiff_t>(k); ++dx, dst += g.c) {
            const auto sx = xx + dx - r;
            if (sy < 0 || sx < 0 || sy >= h || sx >= w) continue;  // zero padding
            std::copy_n(src + static_cast<std::size_t>(sy * w + sx) * g.c, g.c, dst);
          }
        }
      }
    }
  }
  return patches;
}

void col2im_add(const Tensor& dpatches, std::size_t k, Tensor& dx) {
  const Grid g = grid_of(dx);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto h = static_cast<std::ptrdiff_t>(g.h);
  const auto w = static_cast<std::ptrdiff_t>(g.w);
  const double* src = dpatches.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* out = dx.data().data() + b * g.h * g.w * g.c;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        for (std::ptrdiff_t dy = 0; dy < static_cast<std::ptrdiff_t>(k); ++dy) {
          const auto sy = y + dy - r;
          for (std::ptrdiff_t ddx = 0; ddx < static_cast<std::ptrdiff_t>(k); ++ddx, src += g.c) {
            const auto sx = xx + ddx - r;
            if (sy < 0 || sx < 0 || sy >= h || sx >= w) continue;
            double* target = out + static_cast<std::size_t>(sy * w + sx) * g.c;
            for (std::size_t ch = 0; ch < g.c; ++ch) target[ch] += src[ch];
          }
        }
      }
    }
  }
}

Tensor to_time_major(const Tensor& x, std::size_t sequences) {
  const std::size_t steps = x.dim(0) / sequences;
  const std::size_t width = x.dim(1);
  if (sequences == 1) return x;
  Tensor out({x.dim(0), width});
  for (std::size_t b = 0; b < sequences; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy_n(&x.data()[(b * steps + t) * width], width, &out.data()[(t * sequences + b) * width]);
    }
  }
  return out;
}

void add_from_time_major(const Tensor& src, std::size_t sequences, Tensor& dst) {
  const std::size_t steps = src.dim(0) / sequences;
  const std::size_t width = src.dim(1);
  for (std::size_t b = 0; b < sequences; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double* from = &src.data()[(t * sequences + b) * width];
      double* to = &dst.data()[(b * steps + t) * width];
      for (std::size_t j = 0; j < width; ++j) to[j] += from[j];
    }
  }
}

namespace {

void sigmoid_inplace(const kernels::KernelTable& kt, double* z, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) z[j] = -z[j];
  kt.exp_inplace(z, n);
  for (std::size_t j = 0; j < n; ++j) z[j] = 1.0 / (1.0 + z[j]);
}

}  // namespace

LstmCache lstm_run(const Tensor& x, const Tensor& w_in, const Tensor& w_rec, const Tensor& bias,
                   std::size_t sequences) {
  require(x.rank() == 2 && w_in.rank() == 2 && x.dim(1) == w_in.dim(0), "lstm input", x, w_in);
  const std::size_t hd = w_in.dim(1) / 4;
  require(w_in.dim(1) % 4 == 0 && w_rec.rank() == 2 && w_rec.dim(0) == hd &&
              w_rec.dim(1) == 4 * hd,
          "lstm recurrent", w_in, w_rec);
  require(bias.size() == 4 * hd, "lstm bias", w_in, bias);
  if (sequences == 0 || x.dim(0) % sequences != 0) {
    throw DimensionError("lstm: " + std::to_string(x.dim(0)) + " rows do not split into " +
                         std::to_string(sequences) + " sequences");
  }

  const std::size_t rows = x.dim(0);
  const std::size_t steps = rows / sequences;
  const std::size_t nb = sequences;
  const auto& kt = kernels::active();
  LstmCache cache{nb, Tensor({rows, hd}), Tensor({rows, hd}), Tensor({rows, hd}),
                  Tensor({rows, 4 * hd})};
  double* z = cache.gates.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(bias.data().begin(), bias.data().end(), z + r * 4 * hd);
  }
  const Tensor xt = to_time_major(x, nb);
  kt.gemm_nn(rows, x.dim(1), 4 * hd, xt.data().data(), w_in.data().data(), z);

  for (std::size_t t = 0; t < steps; ++t) {
    double* zt = z + t * nb * 4 * hd;
    if (t > 0) {
      kt.gemm_nn(nb, hd, 4 * hd, &cache.hidden.at((t - 1) * nb, 0), w_rec.data().data(), zt);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t row = t * nb + b;
      double* zr = zt + b * 4 * hd;
      double* h = &cache.hidden.at(row, 0);
      double* c = &cache.cell.at(row, 0);
      double* tc = &cache.tanh_cell.at(row, 0);
      const double* c_prev = t > 0 ? &cache.cell.at(row - nb, 0) : nullptr;
      sigmoid_inplace(kt, zr, 2 * hd);
      sigmoid_inplace(kt, zr + 3 * hd, hd);
      for (std::size_t j = 0; j < hd; ++j) {
        const double gg = std::tanh(zr[2 * hd + j]);
        zr[2 * hd + j] = gg;
        c[j] = zr[hd + j] * (c_prev ? c_prev[j] : 0.0) + zr[j] * gg;
        tc[j] = std::tanh(c[j]);
        h[j] = zr[3 * hd + j] * tc[j];
      }
    }
  }
  return cache;
}

Tensor lstm_output(const LstmCache& cache) {
  if (cache.sequences == 1) return cache.hidden;
  Tensor out({cache.hidden.dim(0), cache.hidden.dim(1)});
  add_from_time_major(cache.hidden, cache.sequences, out);
  return out;
}

void lstm_backward(const LstmCache& cache, const Tensor& x, const Tensor& w_in,
                   const Tensor& w_rec, const Tensor& d_hidden, Tensor* dx, Tensor* dw_in,
                   Tensor* dw_rec, Tensor* dbias) {
  const std::size_t rows = cache.hidden.dim(0);
  const std::size_t hd = cache.hidden.dim(1);
  const std::size_t nb = cache.sequences;
  const std::size_t steps = rows / nb;
  const auto& kt = kernels::active();
  const Tensor dh_in = to_time_major(d_hidden, nb);
  Tensor dz({rows, 4 * hd});
  std::vector<double> dh_next(nb * hd, 0.0);
  std::vector<double> dc_next(nb * hd, 0.0);

  for (std::size_t t = steps; t-- > 0;) {
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t row = t * nb + b;
      const double* g = &cache.gates.at(row, 0);
      const double* tcr = &cache.tanh_cell.at(row, 0);
      const double* dhr = &dh_in.at(row, 0);
      const double* c_prev = t > 0 ? &cache.cell.at(row - nb, 0) : nullptr;
      double* dzt = &dz.at(row, 0);
      double* dhn = &dh_next[b * hd];
      double* dcn = &dc_next[b * hd];
      for (std::size_t j = 0; j < hd; ++j) {
        const double ig = g[j];
        const double fg = g[hd + j];
        const double gg = g[2 * hd + j];
        const double og = g[3 * hd + j];
        const double tc = tcr[j];
        const double dh = dhr[j] + dhn[j];
        const double dc = dh * og * (1.0 - tc * tc) + dcn[j];
        dzt[j] = dc * gg * ig * (1.0 - ig);
        dzt[hd + j] = dc * (c_prev ? c_prev[j] : 0.0) * fg * (1.0 - fg);
        dzt[2 * hd + j] = dc * ig * (1.0 - gg * gg);
        dzt[3 * hd + j] = dh * tc * og * (1.0 - og);
        dcn[j] = dc * fg;
      }
    }
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    if (t > 0) {
      const double* dzt = &dz.at(t * nb, 0);
      kt.gemm_nt(nb, 4 * hd, hd, dzt, w_rec.data().data(), dh_next.data());
      if (dw_rec) {
        kt.gemm_tn(nb, hd, 4 * hd, &cache.hidden.at((t - 1) * nb, 0), dzt,
                   dw_rec->data().data());
      }
    }
  }
  if (dw_in) {
    const Tensor xt = to_time_major(x, nb);
    kt.gemm_tn(rows, x.dim(1), 4 * hd, xt.data().data(), dz.data().data(), dw_in->data().data());
  }
  if (dbias) {
    for (std::size_t r = 0; r < rows; ++r) kt.axpy(1.0, &dz.at(r, 0), dbias->data().data(), 4 * hd);
  }
  if (dx) {
    if (nb == 1) {
      kt.gemm_nt(rows, 4 * hd, x.dim(1), dz.data().data(), w_in.data().data(), dx->data().data());
    } else {
      Tensor dxt({rows, x.dim(1)});
      kt.gemm_nt(rows, 4 * hd, x.dim(1), dz.data().data(), w_in.data().data(), dxt.data().data());
      add_from_time_major(dxt, nb, *dx);
    }
  }
}

namespace {

// dst[c * rows + r] = src[r * ld + c]: feature-major copy so inner loops run over time.
void transpose_into(const Strided& src, std::size_t rows, std::size_t width, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) dst[c * rows + r] = src.p[r * src.ld + c];
  }
}

void add_transposed(const double* src, std::size_t rows, std::size_t width, const Slot& dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) dst.p[r * dst.ld + c] += src[c * rows + r];
  }
}

}  // namespace

void attention_forward(const Strided& q, const Strided& k, const Strided& v, std::size_t tq,
                       std::size_t tk, std::size_t d, std::size_t dv, double* weights,
                       double* out, std::size_t ldo) {
  const auto& kt = kernels::active();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> kv_t((d + dv) * tk);
  double* k_t = kv_t.data();
  double* v_t = k_t + d * tk;
  transpose_into(k, tk, d, k_t);
  transpose_into(v, tk, dv, v_t);
  for (std::size_t i = 0; i < tq; ++i) {
    const double* qi = q.p + i * q.ld;
    double* wi = weights + i * tk;
    std::fill(wi, wi + tk, 0.0);
    for (std::size_t c = 0; c < d; ++c) kt.axpy(qi[c] * scale, k_t + c * tk, wi, tk);
    softmax_inplace(wi, tk);
    double* oi = out + i * ldo;
    for (std::size_t c = 0; c < dv; ++c) oi[c] = kt.dot(wi, v_t + c * tk, tk);
  }
}

void attention_backward(const Strided& q, const Strided& k, const Strided& v,
                        const double* weights, const Strided& dout, std::size_t tq,
                        std::size_t tk, std::size_t d, std::size_t dv, const Slot& dq,
                        const Slot& dk, const Slot& dvo, std::vector<double>& scratch) {
  const auto& kt = kernels::active();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  scratch.assign(2 * (d + dv) * tk + 2 * tk, 0.0);
  double* k_t = scratch.data();
  double* v_t = k_t + d * tk;
  double* dk_t = v_t + dv * tk;
  double* dv_t = dk_t + d * tk;
  double* dw = dv_t + dv * tk;
  double* ds = dw + tk;
  transpose_into(k, tk, d, k_t);
  transpose_into(v, tk, dv, v_t);
  const bool want_scores = dq.p || dk.p;
  for (std::size_t i = 0; i < tq; ++i) {
    const double* wi = weights + i * tk;
    const double* gi = dout.p + i * dout.ld;
    if (dvo.p) {
      for (std::size_t c = 0; c < dv; ++c) kt.axpy(gi[c], wi, dv_t + c * tk, tk);
    }
    if (!want_scores) continue;
    std::fill(dw, dw + tk, 0.0);
    for (std::size_t c = 0; c < dv; ++c) kt.axpy(gi[c], v_t + c * tk, dw, tk);
    const double centre = kt.dot(dw, wi, tk);
    for (std::size_t j = 0; j < tk; ++j) ds[j] = wi[j] * (dw[j] - centre) * scale;
    if (dq.p) {
      double* dqi = dq.p + i * dq.ld;
      for (std::size_t c = 0; c < d; ++c) dqi[c] += kt.dot(ds, k_t + c * tk, tk);
    }
    if (dk.p) {
      const double* qi = q.p + i * q.ld;
      for (std::size_t c = 0; c < d; ++c) kt.axpy(qi[c], ds, dk_t + c * tk, tk);
    }
  }
  if (dk.p) add_transposed(dk_t, tk, d, dk);
  if (dvo.p) add_transposed(dv_t, tk, dv, dvo);
}

namespace {

Strided cols(const Tensor& t, std::size_t row0, std::size_t first) {
  return {t.data().data() + row0 * t.dim(1) + first, t.dim(1)};
}

Slot slot(Tensor* t, std::size_t row0, std::size_t first) {
  if (!t) return {nullptr, 0};
  return {t->data().data() + row0 * t->dim(1) + first, t->dim(1)};
}

}  // namespace

void multi_head_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                        std::size_t blocks, std::vector<Tensor>& weights, Tensor& out) {
  const std::size_t tq = q.dim(0) / blocks;
  const std::size_t tk = k.dim(0) / blocks;
  const std::size_t dh = q.dim(1) / heads;
  const std::size_t dvh = v.dim(1) / heads;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      attention_forward(cols(q, b * tq, h * dh), cols(k, b * tk, h * dh),
                        cols(v, b * tk, h * dvh), tq, tk, dh, dvh,
                        weights[h].data().data() + b * tq * tk,
                        out.data().data() + b * tq * out.dim(1) + h * dvh, out.dim(1));
    }
  }
}

void multi_head_backward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         std::size_t blocks, const std::vector<Tensor>& weights,
                         const Tensor& dout, Tensor* dq, Tensor* dk, Tensor* dv) {
  const std::size_t tq = q.dim(0) / blocks;
  const std::size_t tk = k.dim(0) / blocks;
  const std::size_t dh = q.dim(1) / heads;
  const std::size_t dvh = v.dim(1) / heads;
  std::vector<double> scratch;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      attention_backward(cols(q, b * tq, h * dh), cols(k, b * tk, h * dh),
                         cols(v, b * tk, h * dvh), weights[h].data().data() + b * tq * tk,
                         cols(dout, b * tq, h * dvh), tq, tk, dh, dvh, slot(dq, b * tq, h * dh),
                         slot(dk, b * tk, h * dh), slot(dv, b * tk, h * dvh), scratch);
    }
  }
}

}  // namespace pvfd::numerics::detail
