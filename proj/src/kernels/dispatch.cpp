#include <cstdlib>
#include <string_view>

#include "pvfd/error.hpp"
#include "pvfd/kernels.hpp"

namespace pvfd::kernels {

#ifndef PVFD_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* pick_default() {
  const char* env = std::getenv("PVFD_KERNELS");
  const std::string_view want = env ? env : "auto";
  if (want == "scalar") return &scalar_table();
  const bool usable = avx2_table() != nullptr && cpu_supports_avx2();
  if (want == "avx2" && !usable) {
    throw ConfigError("PVFD_KERNELS=avx2 requested but AVX2/FMA is unavailable");
  }
  return usable ? avx2_table() : &scalar_table();
}

const KernelTable*& current() {
  static const KernelTable* table = pick_default();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

void select(Isa isa) {
  if (isa == Isa::kScalar) {
    current() = &scalar_table();
    return;
  }
  if (avx2_table() == nullptr || !cpu_supports_avx2()) {
    throw ConfigError("AVX2 kernels unavailable on this build or CPU");
  }
  current() = avx2_table();
}

}  // namespace pvfd::kernels
