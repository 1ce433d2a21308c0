#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "doctest.h"
#include "itreval/rng.hpp"

using namespace itreval;

TEST_CASE("identical seed and stream reproduce the sequence") {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 32; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("seed and stream both change the sequence") {
  Rng base(42, 0), other_seed(43, 0), other_stream(42, 1);
  int same_seed = 0, same_stream = 0;
  for (int i = 0; i < 32; ++i) {
    std::uint64_t v = base.next_u64();
    same_seed += v == other_seed.next_u64();
    same_stream += v == other_stream.next_u64();
  }
  CHECK(same_seed == 0);
  CHECK(same_stream == 0);
}

TEST_CASE("derive_rng matches direct construction") {
  Rng direct(10, 3);
  Rng derived = derive_rng(10, 3);
  for (int i = 0; i < 8; ++i) CHECK(direct.next_u64() == derived.next_u64());
}

TEST_CASE("next_unit stays inside [0, 1)") {
  Rng rng(9);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 50000; ++i) {
    double u = rng.next_unit();
    if (u < lo) lo = u;
    if (u > hi) hi = u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(hi > 0.99);  // the draw actually covers the range
  CHECK(lo < 0.01);
}

TEST_CASE("next_normal has standard moments") {
  Rng rng(5);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.next_normal();
    s += z;
    s2 += z * z;
  }
  double mean = s / n;
  double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);      // se ~ 0.0022
  CHECK(std::abs(var - 1.0) < 0.02); // se ~ 0.0032
}

TEST_CASE("next_below is bounded and uniform") {
  Rng rng(11);
  std::vector<int> counts(6, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    std::uint64_t v = rng.next_below(6);
    REQUIRE(v < 6);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts)
    CHECK(std::abs(static_cast<double>(c) / n - 1.0 / 6.0) < 0.01);
  for (int i = 0; i < 100; ++i) CHECK(rng.next_below(1) == 0);
}

TEST_CASE("shuffle permutes in place") {
  Rng rng(3);
  std::vector<int> v(8);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 8; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("shuffle is seed-deterministic") {
  std::vector<int> a(20), b(20);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  Rng r1(77), r2(77);
  r1.shuffle(std::span<int>(a));
  r2.shuffle(std::span<int>(b));
  CHECK(a == b);
}
