#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace edr {

// SplitMix64 generator. Hand-rolled distributions keep every seeded
// artifact (data generation, init, shuffling, dropout, sampling)
// bit-identical across platforms; std:: distributions are not portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives an independent stream from (seed, name[, index]). All
  // randomness in the project flows from one root seed through these.
  static Rng substream(std::uint64_t seed, std::string_view name,
                       std::uint64_t index = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_real();

  double uniform(double lo, double hi);

  // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace edr
