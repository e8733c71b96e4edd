#include <cmath>

#include "pvfd/kernels.hpp"

namespace pvfd::kernels {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    for (std::size_t j = 0; j < k; ++j) c[i * k + j] += dot(ai, b + j * n, n);
  }
}

void exp_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::kScalar, "scalar", dot, axpy, gemm_nn, gemm_tn, gemm_nt,
                                 exp_inplace};
  return table;
}

}  // namespace pvfd::kernels
