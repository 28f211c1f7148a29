#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "stratvr/rng.hpp"

using namespace stratvr;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Reference values from the Random123 distribution (kat_vectors).
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
        PhiloxBlock{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                      {0xffffffffu, 0xffffffffu}) ==
        PhiloxBlock{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                      {0xa4093822u, 0x299f31d0u}) ==
        PhiloxBlock{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are pure functions of their address") {
  PhiloxStream a(42, 3, 9), b(42, 3, 9);
  for (int i = 0; i < 100; ++i) REQUIRE(a() == b());

  std::set<std::uint64_t> firsts;
  firsts.insert(PhiloxStream(42, 3, 9)());
  firsts.insert(PhiloxStream(43, 3, 9)());
  firsts.insert(PhiloxStream(42, 4, 9)());
  firsts.insert(PhiloxStream(42, 3, 10)());
  firsts.insert(PhiloxStream(42, 3, 9ull << 32)());
  CHECK(firsts.size() == 5);
}

TEST_CASE("uniform_index is uniform within frequency bands") {
  PhiloxStream rng(7, 0);
  const std::uint64_t n = 10;
  const int draws = 200000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) {
    const auto k = rng.uniform_index(n);
    REQUIRE(k < n);
    ++counts[k];
  }
  const double p = 1.0 / static_cast<double>(n);
  const double sd = std::sqrt(draws * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - draws * p) <= 4.0 * sd);
}

TEST_CASE("uniform01 and normal moments") {
  PhiloxStream rng(11, 1);
  const int draws = 200000;
  double s = 0, s2 = 0, u = 0;
  for (int i = 0; i < draws; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
    const double v = rng.uniform01();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    u += v;
  }
  CHECK(std::abs(s / draws) < 4.0 / std::sqrt(draws));
  CHECK(std::abs(s2 / draws - 1.0) < 4.0 * std::sqrt(2.0 / draws));
  CHECK(std::abs(u / draws - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / draws));
}

TEST_CASE("derive_seed separates tags") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 5) == derive_seed(5, 5));
}
