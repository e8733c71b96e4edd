#include "pvfd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "numerics_detail.hpp"
#include "pvfd/kernels.hpp"
#include "pvfd/numerics.hpp"

namespace pvfd::ops {

using numerics::detail::require;

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  kernels::active().axpy(1.0, src.data().data(), dst.data().data(), dst.size());
}

}  // namespace

Var matmul(Tape& t, Var x, Var w) {
  Tensor out = numerics::matmul(t.value(x), t.value(w));
  return t.record(std::move(out), {x, w}, [x, w](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    const auto& kt = kernels::active();
    const std::size_t m = xv.dim(0), p = xv.dim(1), q = wv.dim(1);
    if (tp.requires_grad(x)) kt.gemm_nt(m, q, p, g.data().data(), wv.data().data(),
                                        tp.grad(x).data().data());
    if (tp.requires_grad(w)) kt.gemm_tn(m, p, q, xv.data().data(), g.data().data(),
                                        tp.grad(w).data().data());
  });
}

Var affine(Tape& t, Var x, Var w, Var b) {
  Tensor out = numerics::affine(t.value(x), t.value(w), t.value(b));
  return t.record(std::move(out), {x, w, b}, [x, w, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    const auto& kt = kernels::active();
    const std::size_t m = xv.dim(0), p = xv.dim(1), q = wv.dim(1);
    if (tp.requires_grad(x)) kt.gemm_nt(m, q, p, g.data().data(), wv.data().data(),
                                        tp.grad(x).data().data());
    if (tp.requires_grad(w)) kt.gemm_tn(m, p, q, xv.data().data(), g.data().data(),
                                        tp.grad(w).data().data());
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < m; ++i) kt.axpy(1.0, &g.at(i, 0), gb.data().data(), q);
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  require(t.value(a).shape() == t.value(b).shape(), "add", t.value(a), t.value(b));
  Tensor out = t.value(a);
  add_into(out, t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) add_into(tp.grad(a), g);
    if (tp.requires_grad(b)) add_into(tp.grad(b), g);
  });
}

Var scale(Tape& t, Var x, double factor) {
  Tensor out = t.value(x);
  for (auto& v : out.data()) v *= factor;
  return t.record(std::move(out), {x}, [x, factor](Tape& tp, std::size_t self) {
    kernels::active().axpy(factor, tp.grad(Var{self}).data().data(), tp.grad(x).data().data(),
                           tp.value(x).size());
  });
}

Var tanh(Tape& t, Var x) {
  Tensor out = t.value(x);
  for (auto& v : out.data()) v = std::tanh(v);
  return t.record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& y = tp.value(Var{self});
    const Tensor& g = tp.grad(Var{self});
    Tensor& gx = tp.grad(x);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var softmax_rows(Tape& t, Var x) {
  Tensor out = numerics::softmax_rows(t.value(x));
  return t.record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& y = tp.value(Var{self});
    const Tensor& g = tp.grad(Var{self});
    Tensor& gx = tp.grad(x);
    const std::size_t n = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i) {
      numerics::detail::softmax_backward_row(&y.data()[i * n], &g.data()[i * n],
                                             &gx.data()[i * n], n);
    }
  });
}

Var conv2d(Tape& t, Var x, Var filters, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& kv = t.value(filters);
  Tensor out = numerics::conv2d(xv, kv, t.value(bias));
  auto patches = std::make_shared<Tensor>(numerics::detail::im2col(xv, kv.dim(0)));
  return t.record(std::move(out), {x, filters, bias},
                  [x, filters, bias, patches](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(Var{self});
                    const Tensor& kv = tp.value(filters);
                    const auto& kt = kernels::active();
                    const std::size_t pixels = patches->dim(0);  // B*H*W
                    const std::size_t width = patches->dim(1);
                    const std::size_t c_out = kv.dim(3);
                    if (tp.requires_grad(filters)) {
                      kt.gemm_tn(pixels, width, c_out, patches->data().data(), g.data().data(),
                                 tp.grad(filters).data().data());
                    }
                    if (tp.requires_grad(bias)) {
                      Tensor& gb = tp.grad(bias);
                      for (std::size_t p = 0; p < pixels; ++p) {
                        kt.axpy(1.0, g.data().data() + p * c_out, gb.data().data(), c_out);
                      }
                    }
                    if (tp.requires_grad(x)) {
                      Tensor dpatches({pixels, width});
                      kt.gemm_nt(pixels, c_out, width, g.data().data(), kv.data().data(),
                                 dpatches.data().data());
                      numerics::detail::col2im_add(dpatches, kv.dim(0), tp.grad(x));
                    }
                  });
}

Var lstm(Tape& t, Var x, Var w_in, Var w_rec, Var bias, std::size_t sequences) {
  auto cache = std::make_shared<numerics::detail::LstmCache>(numerics::detail::lstm_run(
      t.value(x), t.value(w_in), t.value(w_rec), t.value(bias), sequences));
  Tensor out = numerics::detail::lstm_output(*cache);
  return t.record(std::move(out), {x, w_in, w_rec, bias},
                  [x, w_in, w_rec, bias, cache](Tape& tp, std::size_t self) {
                    numerics::detail::lstm_backward(
                        *cache, tp.value(x), tp.value(w_in), tp.value(w_rec), tp.grad(Var{self}),
                        tp.requires_grad(x) ? &tp.grad(x) : nullptr,
                        tp.requires_grad(w_in) ? &tp.grad(w_in) : nullptr,
                        tp.requires_grad(w_rec) ? &tp.grad(w_rec) : nullptr,
                        tp.requires_grad(bias) ? &tp.grad(bias) : nullptr);
                  });
}

Var scaled_dot_attention(Tape& t, Var q, Var k, Var v) { return multi_head(t, q, k, v, 1); }

Var multi_head(Tape& t, Var q, Var k, Var v, std::size_t heads, std::size_t blocks) {
  auto fwd = std::make_shared<numerics::MultiHeadResult>(
      numerics::multi_head(t.value(q), t.value(k), t.value(v), heads, blocks));
  Tensor out = fwd->output;
  return t.record(std::move(out), {q, k, v},
                  [q, k, v, heads, blocks, fwd](Tape& tp, std::size_t self) {
                    numerics::detail::multi_head_backward(
                        tp.value(q), tp.value(k), tp.value(v), heads, blocks, fwd->weights,
                        tp.grad(Var{self}), tp.requires_grad(q) ? &tp.grad(q) : nullptr,
                        tp.requires_grad(k) ? &tp.grad(k) : nullptr,
                        tp.requires_grad(v) ? &tp.grad(v) : nullptr);
                  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0), "concat_cols", av, bv);
  const std::size_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(&av.data()[r * ca], ca, &out.data()[r * (ca + cb)]);
    std::copy_n(&bv.data()[r * cb], cb, &out.data()[r * (ca + cb) + ca]);
  }
  return t.record(std::move(out), {a, b}, [a, b, rows, ca, cb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = &g.data()[r * (ca + cb)];
      if (tp.requires_grad(a)) {
        double* da = &tp.grad(a).data()[r * ca];
        for (std::size_t j = 0; j < ca; ++j) da[j] += src[j];
      }
      if (tp.requires_grad(b)) {
        double* db = &tp.grad(b).data()[r * cb];
        for (std::size_t j = 0; j < cb; ++j) db[j] += src[ca + j];
      }
    }
  });
}

Var reshape(Tape& t, Var x, Shape shape) {
  Tensor out = t.value(x).reshaped(std::move(shape));
  return t.record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    Tensor& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var stack_rows(Tape& t, std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t width = t.value(rows[0]).size();
  Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = t.value(rows[r]);
    require(v.size() == width, "stack_rows", t.value(rows[0]), v);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + r * width);
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return t.record(std::move(out), rows, [inputs, width](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    for (std::size_t r = 0; r < inputs.size(); ++r) {
      if (!tp.requires_grad(inputs[r])) continue;
      kernels::active().axpy(1.0, &g.data()[r * width], tp.grad(inputs[r]).data().data(), width);
    }
  });
}

Var mean_of_rows(Tape& t, Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = t.value(x);
  if (rows.empty()) throw DimensionError("mean_of_rows: empty row set");
  const std::size_t width = xv.cols();
  Tensor out({width});
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto r : rows) {
    if (r >= xv.rows()) throw std::out_of_range("mean_of_rows: row index out of range");
    kernels::active().axpy(inv, &xv.data()[r * width], out.data().data(), width);
  }
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  return t.record(std::move(out), {x}, [x, picked, width, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(Var{self});
    Tensor& gx = tp.grad(x);
    for (auto r : picked) kernels::active().axpy(inv, g.data().data(), &gx.data()[r * width], width);
  });
}

Var cross_entropy(Tape& t, Var probs, std::span<const int> labels) {
  const double loss = numerics::cross_entropy(t.value(probs), labels);
  std::vector<int> kept(labels.begin(), labels.end());
  return t.record(Tensor::vector({loss}), {probs}, [probs, kept](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{self})[0];
    const Tensor& p = tp.value(probs);
    Tensor& gp = tp.grad(probs);
    const double n = static_cast<double>(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const auto c = static_cast<std::size_t>(kept[i]);
      const double pic = p.at(i, c);
      if (pic >= numerics::kLogClamp) gp.at(i, c) -= g / (n * pic);
    }
  });
}

Var cosine_similarity(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.size() == bv.size(), "cosine_similarity", av, bv);
  const double c = numerics::cosine_similarity(av.data(), bv.data());
  return t.record(Tensor::vector({c}), {a, b}, [a, b, c](Tape& tp, std::size_t self) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    const auto& kt = kernels::active();
    const std::size_t n = av.size();
    const double na = std::sqrt(kt.dot(av.data().data(), av.data().data(), n));
    const double nb = std::sqrt(kt.dot(bv.data().data(), bv.data().data(), n));
    if (na == 0.0 || nb == 0.0) return;
    const double g = tp.grad(Var{self})[0];
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
      }
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
      }
    }
  });
}

Var weighted_sum(Tape& t, std::span<const Var> terms, std::span<const double> weights,
                 double offset) {
  if (terms.size() != weights.size()) throw DimensionError("weighted_sum: weight count mismatch");
  double total = offset;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (t.value(terms[i]).size() != 1) {
      throw DimensionError("weighted_sum: non-scalar term " + shape_string(t.value(terms[i]).shape()));
    }
    total += weights[i] * t.value(terms[i])[0];
  }
  std::vector<Var> inputs(terms.begin(), terms.end());
  std::vector<double> w(weights.begin(), weights.end());
  return t.record(Tensor::vector({total}), terms, [inputs, w](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{self})[0];
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (tp.requires_grad(inputs[i])) tp.grad(inputs[i])[0] += w[i] * g;
    }
  });
}

}  // namespace pvfd::ops
