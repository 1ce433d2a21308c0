#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace itreval {

// Counter-based PRNG (Philox-4x32-10). Chosen over <random> engines because
// every draw must be bit-reproducible across platforms and standard library
// distributions are implementation-defined. A (seed, stream) pair names an
// independent sequence, so parallel replications can each own stream == rep
// index without coordination.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double next_unit();

  // Standard normal via Box-Muller on explicit uniforms; pairs are cached.
  double next_normal();

  // Uniform on {0, 1, ..., bound-1}, unbiased via rejection. bound >= 1.
  std::uint64_t next_below(std::uint64_t bound);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      T tmp = values[i - 1];
      values[i - 1] = values[j];
      values[j] = tmp;
    }
  }

 private:
  void refill();

  std::uint32_t counter_[4];
  std::uint32_t key_[2];
  std::uint32_t block_[4];
  int cursor_;          // next 32-bit word within block_, 4 == exhausted
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// Deterministic per-task seed derivation (e.g. one stream per replication).
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(seed, stream);
}

}  // namespace itreval
