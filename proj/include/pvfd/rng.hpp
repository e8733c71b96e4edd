#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace pvfd {

// Stream tags for deriving independent per-component seeds from one master seed.
enum class SeedStream : std::uint64_t {
  kWeather = 0x57454154,
  kProsumer = 0x50524f53,
  kNoise = 0x4e4f4953,
  kSplit = 0x53504c54,
  kFraud = 0x46524155,
  kInitBase = 0x494e4242,
  kInitHead = 0x494e4848,
  kShuffle = 0x53485546,
};

std::uint64_t splitmix64(std::uint64_t x);

// Mixes (master, stream, a, b) into a seed; order of arguments matters.
std::uint64_t derive_seed(std::uint64_t master, SeedStream stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

// mt19937_64 engine with distribution mappings spelled out here rather than
// delegated to <random> distributions, whose outputs vary between standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pvfd
