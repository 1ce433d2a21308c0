#include "itreval/rng.hpp"

#include <cmath>
#include <numbers>

namespace itreval {

namespace {

// Philox-4x32 round constants (Salmon et al. reference values).
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
  std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
  std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
  std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  std::uint32_t out0 = hi1 ^ ctr[1] ^ key[0];
  std::uint32_t out2 = hi0 ^ ctr[3] ^ key[1];
  ctr[0] = out0;
  ctr[1] = lo1;
  ctr[2] = out2;
  ctr[3] = lo0;
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  key_[0] = static_cast<std::uint32_t>(seed);
  key_[1] = static_cast<std::uint32_t>(seed >> 32);
  counter_[0] = 0;
  counter_[1] = 0;
  counter_[2] = static_cast<std::uint32_t>(stream);
  counter_[3] = static_cast<std::uint32_t>(stream >> 32);
  cursor_ = 4;
}

void Rng::refill() {
  std::uint32_t ctr[4] = {counter_[0], counter_[1], counter_[2], counter_[3]};
  std::uint32_t key[2] = {key_[0], key_[1]};
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, key);
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  block_[0] = ctr[0];
  block_[1] = ctr[1];
  block_[2] = ctr[2];
  block_[3] = ctr[3];
  cursor_ = 0;
  // 64-bit block counter in words 0..1; words 2..3 hold the stream id.
  if (++counter_[0] == 0) ++counter_[1];
}

std::uint64_t Rng::next_u64() {
  if (cursor_ >= 3) {
    // Need two fresh words; drop a possible odd leftover word to keep the
    // 64-bit output sequence independent of call interleaving with refill.
    if (cursor_ >= 4) refill();
    if (cursor_ == 3) refill();
  }
  std::uint64_t lo = block_[cursor_];
  std::uint64_t hi = block_[cursor_ + 1];
  cursor_ += 2;
  return (hi << 32) | lo;
}

double Rng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - next_unit();
  double u2 = next_unit();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  have_cached_normal_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
  // Classic rejection on the top of the range to remove modulo bias.
  std::uint64_t x, r;
  do {
    x = next_u64();
    r = x % bound;
  } while (x - r > static_cast<std::uint64_t>(-1) - (bound - 1));
  return r;
}

}  // namespace itreval
