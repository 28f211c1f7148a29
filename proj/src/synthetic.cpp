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

#include "stratvr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <numeric>

#include "stratvr/errors.hpp"
#include "stratvr/rng.hpp"

namespace stratvr {

namespace {

constexpr std::uint32_t kShapeStream = 1;
constexpr std::uint32_t kNoiseStream = 2;

// Largest-remainder counts for the given fractions; ties go to the lower class.
std::vector<std::size_t> apportion(const std::vector<double>& fractions, std::size_t total) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t used = 0;
  for (std::size_t c = 0; c < fractions.size(); ++c) {
    const double exact = fractions[c] * static_cast<double>(total);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(counts[c]);
    used += counts[c];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; used < total; ++i, ++used) ++counts[order[i % order.size()]];
  // Keep every class present when there is room for it.
  if (total >= counts.size()) {
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > 0) continue;
      const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      --counts[donor];
      ++counts[c];
    }
  }
  return counts;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (dims.size() != 2 && dims.size() != 3) throw InvalidInput("synthetic dims must have 2 or 3 axes");
  for (std::size_t d : dims) {
    if (d == 0) throw InvalidInput("synthetic dims must be positive");
  }
  if (num_classes < 1) throw InvalidInput("K must be >= 1");
  if (num_classes > 1 && !(smallest_fraction > 0.0 && smallest_fraction < 1.0)) {
    throw InvalidInput("smallest_fraction must lie in (0, 1)");
  }
  if (!(decay > 0.0 && decay <= 1.0)) throw InvalidInput("decay must lie in (0, 1]");
  if (!(exponent >= 1.0) || !std::isfinite(exponent)) throw InvalidInput("exponent must be >= 1");
  if (!(wobble >= 0.0 && wobble < 0.5)) throw InvalidInput("wobble must lie in [0, 0.5)");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidInput("noise must be >= 0");
}

std::vector<double> class_profile(const SyntheticSpec& spec) {
  spec.validate();
  const auto k = static_cast<std::size_t>(spec.num_classes);
  if (k == 1) return {1.0};
  std::vector<double> f(k);
  double share = 1.0, norm = 0.0;
  for (std::size_t c = 0; c + 1 < k; ++c) {
    f[c] = share;
    norm += share;
    share *= spec.decay;
  }
  for (std::size_t c = 0; c + 1 < k; ++c) f[c] *= (1.0 - spec.smallest_fraction) / norm;
  f[k - 1] = spec.smallest_fraction;
  return f;
}

PixelLattice generate_synthetic(const SyntheticSpec& spec) {
  const auto fractions = class_profile(spec);
  const std::size_t rank = spec.dims.size();
  auto shape_lattice = PixelLattice::uniform(spec.dims, spec.num_classes);
  const std::size_t count = shape_lattice.size();

  PhiloxStream shape_rng(spec.seed, kShapeStream);
  std::array<double, 3> center{}, axis{};
  for (std::size_t a = 0; a < rank; ++a) {
    center[a] = 0.2 * (shape_rng.uniform01() - 0.5);
    axis[a] = 0.8 + 0.4 * shape_rng.uniform01();
  }
  const double phase1 = 2.0 * std::numbers::pi * shape_rng.uniform01();
  const double phase2 = 2.0 * std::numbers::pi * shape_rng.uniform01();

  std::vector<double> level(count);
  for (PixelIndex p = 0; p < count; ++p) {
    const Coord c = shape_lattice.coord(p);
    std::array<double, 3> u{};
    double r = 0.0;
    for (std::size_t a = 0; a < rank; ++a) {
      const double d = static_cast<double>(spec.dims[a]);
      u[a] = ((static_cast<double>(c[a]) + 0.5) / d * 2.0 - 1.0 - center[a]) / axis[a];
      r += std::pow(std::abs(u[a]), spec.exponent);
    }
    r = std::pow(r, 1.0 / spec.exponent);
    const double angle = std::atan2(u[1], u[0]);
    r *= 1.0 + spec.wobble * (0.7 * std::sin(3.0 * angle + phase1) + 0.3 * std::sin(5.0 * angle + phase2));
    level[p] = r;
  }

  std::vector<PixelIndex> order(count);
  std::iota(order.begin(), order.end(), PixelIndex{0});
  std::stable_sort(order.begin(), order.end(), [&](PixelIndex a, PixelIndex b) { return level[a] > level[b]; });
  const auto counts = apportion(fractions, count);
  std::vector<int> classes(count);
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) classes[order[cursor++]] = static_cast<int>(c);
  }

  PhiloxStream noise_rng(spec.seed, kNoiseStream);
  std::vector<double> intensity(count);
  for (PixelIndex p = 0; p < count; ++p) {
    intensity[p] = static_cast<double>(classes[p] + 1) / static_cast<double>(spec.num_classes) +
                   spec.noise * noise_rng.normal();
  }

  const std::size_t payload_dim = rank + 2;
  std::vector<double> payload(count * payload_dim);
  for (PixelIndex p = 0; p < count; ++p) {
    const Coord c = shape_lattice.coord(p);
    double* row = &payload[p * payload_dim];
    for (std::size_t a = 0; a < rank; ++a) {
      row[a] = spec.dims[a] > 1 ? static_cast<double>(c[a]) / static_cast<double>(spec.dims[a] - 1) : 0.0;
    }
    row[rank] = intensity[p];
    double sum = 0.0;
    int n = 0;
    for (int dz = (rank == 3 ? -1 : 0); dz <= (rank == 3 ? 1 : 0); ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          Coord q = c;
          if (rank == 3) {
            q[0] += dz;
            q[1] += dy;
            q[2] += dx;
          } else {
            q[0] += dy;
            q[1] += dx;
          }
          if (auto idx = shape_lattice.index(q)) {
            sum += intensity[*idx];
            ++n;
          }
        }
      }
    }
    row[rank + 1] = sum / n;
  }
  return PixelLattice(spec.dims, spec.num_classes, std::move(classes), payload_dim, std::move(payload));
}

SyntheticSpec synthetic_spec_from_json(const std::string& text) {
  SyntheticSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.dims = j.value("dims", s.dims);
    s.num_classes = j.value("K", s.num_classes);
    s.smallest_fraction = j.value("smallest_fraction", s.smallest_fraction);
    s.decay = j.value("decay", s.decay);
    s.exponent = j.value("exponent", s.exponent);
    s.wobble = j.value("wobble", s.wobble);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string synthetic_spec_to_json(const SyntheticSpec& s) {
  nlohmann::ordered_json j;
  j["dims"] = s.dims;
  j["K"] = s.num_classes;
  j["smallest_fraction"] = s.smallest_fraction;
  j["decay"] = s.decay;
  j["exponent"] = s.exponent;
  j["wobble"] = s.wobble;
  j["noise"] = s.noise;
  j["seed"] = s.seed;
  return j.dump(2);
}

double class_fraction(const PixelLattice& lattice, int c) {
  const auto classes = lattice.classes();
  const auto hits = std::count(classes.begin(), classes.end(), c);
  return static_cast<double>(hits) / static_cast<double>(classes.size());
}

}  // namespace stratvr
