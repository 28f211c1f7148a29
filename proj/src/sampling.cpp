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

#include "stratvr/sampling.hpp"

#include <algorithm>
#include <json.hpp>
#include <numeric>

#include "stratvr/errors.hpp"
#include "stratvr/rng.hpp"

namespace stratvr {

std::string to_string(Sampler sampler) {
  switch (sampler) {
    case Sampler::kNaive: return "ns";
    case Sampler::kStratified: return "sg";
    case Sampler::kAntithetic: return "sag";
  }
  return "unknown";
}

Sampler parse_sampler(const std::string& name) {
  if (name == "ns" || name == "NS") return Sampler::kNaive;
  if (name == "sg" || name == "SG") return Sampler::kStratified;
  if (name == "sag" || name == "SAG") return Sampler::kAntithetic;
  throw InvalidInput("unknown sampler '" + name + "'");
}

Allocation allocate_proportional(const Stratification& stratification, std::size_t n,
                                 EmptyStrata mode) {
  if (n < 1) throw InvalidInput("sample size must be >= 1");
  const std::size_t m_count = stratification.size();
  const auto population = static_cast<unsigned __int128>(stratification.population());

  Allocation alloc;
  alloc.total = n;
  alloc.empty_strata = mode;
  alloc.per_stratum.resize(m_count);
  // Quotas n * |P_m| / |P| split into integer floor and remainder numerator so
  // that ranking fractional parts is exact.
  std::vector<unsigned __int128> remainder(m_count);
  std::size_t assigned = 0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto numer = static_cast<unsigned __int128>(n) * stratification[m].size();
    alloc.per_stratum[m] = static_cast<std::size_t>(numer / population);
    remainder[m] = numer % population;
    assigned += alloc.per_stratum[m];
  }
  std::vector<std::size_t> order(m_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++alloc.per_stratum[order[i]];

  if (mode == EmptyStrata::kGuaranteeOne) {
    if (n < m_count) {
      throw InvalidInput("n = " + std::to_string(n) + " is smaller than the " +
                         std::to_string(m_count) +
                         " strata; every stratum needs a draw unless exact-empty-strata mode is "
                         "used");
    }
    for (std::size_t m = 0; m < m_count; ++m) {
      if (alloc.per_stratum[m] != 0) continue;
      // Largest allocation, lowest index on ties.
      auto donor = std::max_element(alloc.per_stratum.begin(), alloc.per_stratum.end());
      --*donor;
      alloc.per_stratum[m] = 1;
    }
  }
  return alloc;
}

bool is_exactly_proportional(const Stratification& stratification, const Allocation& allocation) {
  if (allocation.per_stratum.size() != stratification.size()) return false;
  const auto population = static_cast<unsigned __int128>(stratification.population());
  for (std::size_t m = 0; m < stratification.size(); ++m) {
    if (static_cast<unsigned __int128>(allocation.per_stratum[m]) * population !=
        static_cast<unsigned __int128>(allocation.total) * stratification[m].size()) {
      return false;
    }
  }
  return true;
}

std::size_t SampleSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& s : strata) n += s.pixels.size();
  return n;
}

std::vector<PixelIndex> SampleSet::flatten() const {
  std::vector<PixelIndex> out;
  out.reserve(total_size());
  for (const auto& s : strata) out.insert(out.end(), s.pixels.begin(), s.pixels.end());
  return out;
}

SampleSet sample_ns(const PixelLattice& lattice, std::size_t n, std::uint64_t seed,
                    std::uint64_t trial) {
  if (lattice.empty()) throw InvalidInput("cannot sample an empty lattice");
  if (n < 1) throw InvalidInput("sample size must be >= 1");
  PhiloxStream rng(seed, PhiloxStream::kPopulationStream, trial);
  StratumSample all;
  all.stratum = -1;
  all.pixels.resize(n);
  for (auto& p : all.pixels) p = rng.uniform_index(lattice.size());
  all.provenance.assign(n, Provenance::kDrawn);
  return SampleSet{Sampler::kNaive, {std::move(all)}};
}

void draw_sg_positions(const Stratum& stratum, std::size_t count, std::uint64_t seed,
                       std::uint64_t trial, std::vector<std::size_t>& out) {
  PhiloxStream rng(seed, static_cast<std::uint32_t>(stratum.id()), trial);
  out.resize(count);
  for (auto& pos : out) pos = rng.uniform_index(stratum.size());
}

void draw_sag_positions(const Stratum& stratum, std::size_t count, std::uint64_t seed,
                        std::uint64_t trial, std::vector<std::size_t>& out) {
  PhiloxStream rng(seed, static_cast<std::uint32_t>(stratum.id()), trial);
  out.resize(count);
  const std::size_t pairs = count / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t pos = rng.uniform_index(stratum.size());
    out[2 * i] = pos;
    out[2 * i + 1] = stratum.reflected_position(pos);
  }
  if (count % 2 == 1) out[count - 1] = rng.uniform_index(stratum.size());
}

StratumSample sample_stratum(const Stratum& stratum, Sampler sampler, std::size_t count,
                             std::uint64_t seed, std::uint64_t trial) {
  std::vector<std::size_t> positions;
  StratumSample out;
  out.stratum = static_cast<std::int64_t>(stratum.id());
  out.provenance.assign(count, Provenance::kDrawn);
  if (sampler == Sampler::kAntithetic) {
    draw_sag_positions(stratum, count, seed, trial, positions);
    for (std::size_t i = 0; i < count / 2; ++i) out.provenance[2 * i + 1] = Provenance::kReflected;
  } else {
    draw_sg_positions(stratum, count, seed, trial, positions);
  }
  out.pixels.reserve(count);
  for (std::size_t pos : positions) out.pixels.push_back(stratum.pixels()[pos]);
  return out;
}

namespace {

SampleSet sample_stratified(Sampler sampler, const Stratification& stratification,
                            const Allocation& allocation, std::uint64_t seed,
                            std::uint64_t trial) {
  if (allocation.per_stratum.size() != stratification.size()) {
    throw InvalidInput("allocation has " + std::to_string(allocation.per_stratum.size()) +
                       " entries for " + std::to_string(stratification.size()) + " strata");
  }
  SampleSet out{sampler, {}};
  out.strata.reserve(stratification.size());
  for (std::size_t m = 0; m < stratification.size(); ++m) {
    out.strata.push_back(
        sample_stratum(stratification[m], sampler, allocation.per_stratum[m], seed, trial));
  }
  return out;
}

}  // namespace

SampleSet sample_sg(const Stratification& stratification, const Allocation& allocation,
                    std::uint64_t seed, std::uint64_t trial) {
  return sample_stratified(Sampler::kStratified, stratification, allocation, seed, trial);
}

SampleSet sample_sag(const Stratification& stratification, const Allocation& allocation,
                     std::uint64_t seed, std::uint64_t trial) {
  return sample_stratified(Sampler::kAntithetic, stratification, allocation, seed, trial);
}

SampleSet sample(Sampler sampler, const PixelLattice& lattice,
                 const Stratification& stratification, const Allocation& allocation,
                 std::uint64_t seed, std::uint64_t trial) {
  switch (sampler) {
    case Sampler::kNaive: return sample_ns(lattice, allocation.total, seed, trial);
    case Sampler::kStratified: return sample_sg(stratification, allocation, seed, trial);
    case Sampler::kAntithetic: return sample_sag(stratification, allocation, seed, trial);
  }
  throw InvalidInput("unknown sampler");
}

std::string sample_set_to_json(const SampleSet& samples) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : samples.strata) {
    nlohmann::ordered_json entry;
    entry["stratum"] = s.stratum;
    entry["pixels"] = s.pixels;
    auto prov = nlohmann::ordered_json::array();
    for (Provenance p : s.provenance) prov.push_back(p == Provenance::kDrawn ? "drawn" : "reflected");
    entry["provenance"] = std::move(prov);
    arr.push_back(std::move(entry));
  }
  return arr.dump();
}

SampleSet sample_set_from_json(const std::string& text) {
  SampleSet out;
  out.sampler = Sampler::kStratified;
  const auto arr = nlohmann::json::parse(text);
  if (!arr.is_array()) throw InvalidInput("sample set JSON must be an array");
  for (const auto& entry : arr) {
    StratumSample s;
    s.stratum = entry.at("stratum").get<std::int64_t>();
    s.pixels = entry.at("pixels").get<std::vector<PixelIndex>>();
    for (const auto& p : entry.at("provenance")) {
      const auto tag = p.get<std::string>();
      if (tag == "drawn") {
        s.provenance.push_back(Provenance::kDrawn);
      } else if (tag == "reflected") {
        s.provenance.push_back(Provenance::kReflected);
        out.sampler = Sampler::kAntithetic;
      } else {
        throw InvalidInput("unknown provenance '" + tag + "'");
      }
    }
    if (s.provenance.size() != s.pixels.size()) {
      throw InvalidInput("provenance and pixel lists differ in length");
    }
    if (s.stratum < 0) out.sampler = Sampler::kNaive;
    out.strata.push_back(std::move(s));
  }
  return out;
}

}  // namespace stratvr
