#pragma once

#include <cstddef>
#include <string_view>

// Dense inner-loop kernels. Every routine has a portable scalar reference and,
// on x86-64, an AVX2+FMA variant; one table is selected at startup.
//
// All matrices are row-major and contiguous. The gemm routines accumulate
// into C (C += ...), callers zero C when they want a plain product.

namespace pvfd::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;

  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  // C[k x n] += A[m x k]^T * B[m x n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
                  double* c);
  // C[m x k] += A[m x n] * B[k x n]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // x[i] = exp(x[i]). Results below the normal range may flush to zero.
  void (*exp_inplace)(double* x, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the build has no AVX2 variant.
const KernelTable* avx2_table();

bool cpu_supports_avx2();

// Table used by the numerics layer. Chosen on first use from the CPU and the
// PVFD_KERNELS environment variable ("scalar", "avx2", "auto").
const KernelTable& active();

// Overrides the active table. Not synchronized; call before any concurrent work.
void select(Isa isa);

}  // namespace pvfd::kernels
