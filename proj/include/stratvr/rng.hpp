/*
 * Copyright 2026 The stratvr Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef STRATVR_RNG_HPP
#define STRATVR_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

// Counter-based random streams built on Philox4x32-10.
//   Salmon et al., "Parallel random numbers: as easy as 1, 2, 3", SC 2011.
//
// A stream is addressed by (seed, stream id, trial id). The 64-bit seed is the
// Philox key; the 128-bit counter holds (block, stream id, trial lo, trial hi).
// Every stream is therefore a pure function of its address, which is what lets
// strata and trials be processed in any order or on any thread.

namespace stratvr {

using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// One Philox4x32-10 evaluation.
constexpr PhiloxBlock philox4x32_10(PhiloxBlock ctr, PhiloxKey key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/// SplitMix64 finalizer; used to derive child seeds from (seed, tag).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return mix64(mix64(seed) ^ mix64(tag + 0x632BE59BD9B4E019ull));
}

/// Sequential view over one counter-based stream. Satisfies
/// UniformRandomBitGenerator, but the helpers below should be preferred over
/// <random> distributions, whose output is implementation-defined.
class PhiloxStream {
 public:
  using result_type = std::uint64_t;

  /// Stream id reserved for draws that do not belong to any stratum.
  static constexpr std::uint32_t kPopulationStream = 0xFFFFFFFFu;

  PhiloxStream(std::uint64_t seed, std::uint32_t stream_id, std::uint64_t trial = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_id_(stream_id),
        trial_(trial) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (word_ >= 4) refill();
    const std::uint64_t lo = buffer_[word_];
    const std::uint64_t hi = buffer_[word_ + 1];
    word_ += 2;
    return (hi << 32) | lo;
  }

  /// Uniform integer in [0, n); n must be > 0. Lemire's method with rejection,
  /// so the result is exactly uniform.
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    auto product = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(product);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        product = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t blocks_consumed() const noexcept { return block_; }

 private:
  void refill() noexcept {
    buffer_ = philox4x32_10({static_cast<std::uint32_t>(block_), stream_id_,
                             static_cast<std::uint32_t>(trial_),
                             static_cast<std::uint32_t>(trial_ >> 32)},
                            key_);
    ++block_;
    word_ = 0;
  }

  PhiloxKey key_;
  std::uint32_t stream_id_;
  std::uint64_t trial_;
  std::uint64_t block_ = 0;
  PhiloxBlock buffer_{};
  int word_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stratvr

#endif  // STRATVR_RNG_HPP
