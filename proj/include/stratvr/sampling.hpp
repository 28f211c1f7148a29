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

#ifndef STRATVR_SAMPLING_HPP
#define STRATVR_SAMPLING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stratvr/lattice.hpp"

namespace stratvr {

enum class Sampler { kNaive, kStratified, kAntithetic };

std::string to_string(Sampler sampler);  // "ns", "sg", "sag"
Sampler parse_sampler(const std::string& name);

/// How strata that would receive zero draws are treated.
enum class EmptyStrata {
  /// Steal units from the largest allocations so every n_m >= 1.
  kGuaranteeOne,
  /// Allow n_m == 0; estimators substitute the exact stratum mean.
  kExact,
};

struct Allocation {
  std::vector<std::size_t> per_stratum;
  std::size_t total = 0;
  EmptyStrata empty_strata = EmptyStrata::kGuaranteeOne;
};

/// Largest-remainder apportionment of n * w_m, remaining units to the largest
/// fractional parts with ties to the lowest stratum index.
Allocation allocate_proportional(const Stratification& stratification, std::size_t n,
                                 EmptyStrata mode = EmptyStrata::kGuaranteeOne);

/// True when n_m * |P| == n * |P_m| for every stratum.
bool is_exactly_proportional(const Stratification& stratification, const Allocation& allocation);

enum class Provenance : std::uint8_t { kDrawn, kReflected };

struct StratumSample {
  /// Stratum index, or -1 for the single pseudo-stratum of a naive sample.
  std::int64_t stratum = -1;
  std::vector<PixelIndex> pixels;
  std::vector<Provenance> provenance;
};

struct SampleSet {
  Sampler sampler = Sampler::kNaive;
  std::vector<StratumSample> strata;

  std::size_t total_size() const noexcept;
  /// All drawn pixels, concatenated in stratum order.
  std::vector<PixelIndex> flatten() const;
};

/// n uniform draws with replacement from the whole lattice.
SampleSet sample_ns(const PixelLattice& lattice, std::size_t n, std::uint64_t seed,
                    std::uint64_t trial = 0);

/// n_m uniform draws with replacement from each P_m. Stratum m reads the stream
/// (seed, m, trial), so its draws do not depend on the order strata are visited.
SampleSet sample_sg(const Stratification& stratification, const Allocation& allocation,
                    std::uint64_t seed, std::uint64_t trial = 0);

/// Per stratum: ceil(n_m / 2) uniform draws, each of the first floor(n_m / 2)
/// followed by its reflection. Odd n_m leaves the last draw unpaired.
SampleSet sample_sag(const Stratification& stratification, const Allocation& allocation,
                     std::uint64_t seed, std::uint64_t trial = 0);

SampleSet sample(Sampler sampler, const PixelLattice& lattice,
                 const Stratification& stratification, const Allocation& allocation,
                 std::uint64_t seed, std::uint64_t trial = 0);

// Single-stratum building blocks. Positions index into stratum.pixels().

void draw_sg_positions(const Stratum& stratum, std::size_t count, std::uint64_t seed,
                       std::uint64_t trial, std::vector<std::size_t>& out);
void draw_sag_positions(const Stratum& stratum, std::size_t count, std::uint64_t seed,
                        std::uint64_t trial, std::vector<std::size_t>& out);
StratumSample sample_stratum(const Stratum& stratum, Sampler sampler, std::size_t count,
                             std::uint64_t seed, std::uint64_t trial = 0);

/// [{"stratum": m, "pixels": [...], "provenance": ["drawn" | "reflected", ...]}, ...]
std::string sample_set_to_json(const SampleSet& samples);
SampleSet sample_set_from_json(const std::string& text);

}  // namespace stratvr

#endif  // STRATVR_SAMPLING_HPP
