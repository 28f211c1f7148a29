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

#include "stratvr/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "stratvr/errors.hpp"

namespace stratvr {

PixelLattice::PixelLattice(std::vector<std::size_t> dims, int num_classes,
                           std::vector<int> classes, std::size_t payload_dim,
                           std::vector<double> payload)
    : dims_(std::move(dims)), num_classes_(num_classes), classes_(std::move(classes)) {
  if (dims_.size() != 2 && dims_.size() != 3) {
    throw InvalidInput("lattice must have 2 or 3 axes");
  }
  std::size_t count = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw InvalidInput("lattice axes must be positive");
    count *= d;
  }
  if (num_classes_ < 1) throw InvalidInput("number of classes must be >= 1");
  if (classes_.size() != count) {
    throw InvalidInput("class map has " + std::to_string(classes_.size()) + " entries, expected " +
                       std::to_string(count));
  }
  for (int c : classes_) {
    if (c < 0 || c >= num_classes_) throw InvalidInput("class id out of range");
  }
  strides_ = {1, 1, 1};
  if (rank() == 2) {
    strides_[0] = dims_[1];
  } else {
    strides_[1] = dims_[2];
    strides_[0] = dims_[1] * dims_[2];
  }
  set_payload(payload_dim, std::move(payload));
}

PixelLattice PixelLattice::uniform(std::vector<std::size_t> dims, int num_classes) {
  std::size_t count = 1;
  for (std::size_t d : dims) count *= d;
  return PixelLattice(std::move(dims), num_classes, std::vector<int>(count, 0));
}

void PixelLattice::set_payload(std::size_t payload_dim, std::vector<double> payload) {
  if (payload.size() != payload_dim * classes_.size()) {
    throw InvalidInput("payload size does not match pixel count times payload dimension");
  }
  payload_dim_ = payload_dim;
  payload_ = std::move(payload);
}

Coord PixelLattice::coord(PixelIndex p) const noexcept {
  Coord c{0, 0, 0};
  for (std::size_t axis = 0; axis < rank(); ++axis) {
    c[axis] = static_cast<std::int64_t>(p / strides_[axis]);
    p %= strides_[axis];
  }
  return c;
}

std::optional<PixelIndex> PixelLattice::index(const Coord& c) const noexcept {
  PixelIndex p = 0;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    if (axis >= rank()) {
      if (c[axis] != 0) return std::nullopt;
      continue;
    }
    if (c[axis] < 0 || c[axis] >= static_cast<std::int64_t>(dims_[axis])) return std::nullopt;
    p += static_cast<std::size_t>(c[axis]) * strides_[axis];
  }
  return p;
}

// ---------------------------------------------------------------------------

Stratum::Stratum(std::size_t id, std::vector<PixelIndex> pixels, const PixelLattice& lattice,
                 std::optional<int> class_id)
    : id_(id), pixels_(std::move(pixels)), class_id_(class_id) {
  if (pixels_.empty()) throw InvalidInput("stratum must be nonempty");
  std::sort(pixels_.begin(), pixels_.end());
  if (std::adjacent_find(pixels_.begin(), pixels_.end()) != pixels_.end()) {
    throw InvalidInput("stratum contains duplicate pixels");
  }
  if (pixels_.back() >= lattice.size()) throw InvalidInput("stratum pixel outside lattice");

  std::vector<Coord> coords;
  coords.reserve(pixels_.size());
  std::array<std::int64_t, 3> sum{0, 0, 0};
  for (PixelIndex p : pixels_) {
    coords.push_back(lattice.coord(p));
    for (int a = 0; a < 3; ++a) sum[a] += coords.back()[a];
  }
  const auto count = static_cast<std::int64_t>(pixels_.size());
  for (int a = 0; a < 3; ++a) center_[a] = static_cast<double>(sum[a]) / static_cast<double>(count);

  // 2c - p is integral iff 2 * sum - count * p is divisible by count; doing it
  // in integers keeps the exact case free of rounding.
  reflection_.resize(pixels_.size());
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    Coord target{};
    bool integral = true;
    for (int a = 0; a < 3; ++a) {
      const std::int64_t numer = 2 * sum[a] - count * coords[i][a];
      if (numer % count != 0) {
        integral = false;
        break;
      }
      target[a] = numer / count;
    }
    if (integral) {
      if (auto q = lattice.index(target); q && contains(*q)) {
        reflection_[i] = position(*q);
        continue;
      }
    }
    // Squared distance to 2c - p scaled by count^2, kept in integers so that
    // equidistant members tie exactly and the lowest index wins.
    using Wide = __int128;
    Wide best = -1;
    std::size_t best_pos = 0;
    for (std::size_t j = 0; j < pixels_.size(); ++j) {
      Wide d2 = 0;
      for (int a = 0; a < 3; ++a) {
        const Wide diff = static_cast<Wide>(count) * coords[j][a] -
                          (static_cast<Wide>(2) * sum[a] - static_cast<Wide>(count) * coords[i][a]);
        d2 += diff * diff;
      }
      if (best < 0 || d2 < best) {
        best = d2;
        best_pos = j;
      }
    }
    reflection_[i] = best_pos;
    ++snapped_;
  }
}

bool Stratum::contains(PixelIndex p) const noexcept {
  return std::binary_search(pixels_.begin(), pixels_.end(), p);
}

std::size_t Stratum::position(PixelIndex p) const {
  auto it = std::lower_bound(pixels_.begin(), pixels_.end(), p);
  if (it == pixels_.end() || *it != p) {
    throw InvalidInput("pixel " + std::to_string(p) + " is not in stratum " + std::to_string(id_));
  }
  return static_cast<std::size_t>(it - pixels_.begin());
}

PixelIndex reflect(const Stratum& stratum, PixelIndex pixel) {
  return stratum.pixels()[stratum.reflected_position(stratum.position(pixel))];
}

// ---------------------------------------------------------------------------

std::string to_string(StratificationScheme scheme) {
  switch (scheme) {
    case StratificationScheme::kGrid: return "grid";
    case StratificationScheme::kClass: return "class";
    case StratificationScheme::kGridClass: return "grid_class";
  }
  return "unknown";
}

StratificationScheme parse_scheme(const std::string& name) {
  if (name == "grid") return StratificationScheme::kGrid;
  if (name == "class") return StratificationScheme::kClass;
  if (name == "grid_class" || name == "grid-class" || name == "gridxclass") {
    return StratificationScheme::kGridClass;
  }
  throw InvalidInput("unknown stratification scheme '" + name + "'");
}

Stratification::Stratification(std::vector<Stratum> strata, StratificationScheme scheme,
                               std::size_t population)
    : strata_(std::move(strata)), scheme_(scheme), population_(population) {
  std::size_t total = 0;
  for (const auto& s : strata_) total += s.size();
  if (strata_.empty() || total != population_) {
    throw InvalidInput("strata do not cover the population");
  }
}

std::size_t Stratification::snapped_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : strata_) n += s.snapped_count();
  return n;
}

namespace {

void check_cell_shape(const PixelLattice& lattice, std::span<const std::size_t> cell_shape) {
  if (lattice.empty()) throw InvalidInput("empty lattice");
  if (cell_shape.size() != lattice.rank()) {
    throw InvalidInput("cell shape rank does not match lattice rank");
  }
  for (std::size_t a = 0; a < cell_shape.size(); ++a) {
    if (cell_shape[a] < 1 || cell_shape[a] > lattice.dims()[a]) {
      throw InvalidInput("cell shape entries must lie in [1, dim]");
    }
  }
}

std::size_t cell_of(const PixelLattice& lattice, PixelIndex p,
                    std::span<const std::size_t> cell_shape) {
  const Coord c = lattice.coord(p);
  std::size_t cell = 0;
  for (std::size_t a = 0; a < lattice.rank(); ++a) {
    const std::size_t cells_on_axis = (lattice.dims()[a] + cell_shape[a] - 1) / cell_shape[a];
    cell = cell * cells_on_axis + static_cast<std::size_t>(c[a]) / cell_shape[a];
  }
  return cell;
}

// Buckets pixels by key in ascending key order; pixels stay sorted within a
// bucket because they are visited in index order.
Stratification from_buckets(const PixelLattice& lattice,
                            const std::map<std::size_t, std::vector<PixelIndex>>& buckets,
                            StratificationScheme scheme, bool class_keyed) {
  std::vector<Stratum> strata;
  strata.reserve(buckets.size());
  const auto k = static_cast<std::size_t>(lattice.num_classes());
  for (const auto& [key, pixels] : buckets) {
    std::optional<int> class_id;
    if (class_keyed) class_id = static_cast<int>(key % k);
    strata.emplace_back(strata.size(), pixels, lattice, class_id);
  }
  return Stratification(std::move(strata), scheme, lattice.size());
}

}  // namespace

Stratification build_grid_stratification(const PixelLattice& lattice,
                                         std::span<const std::size_t> cell_shape) {
  check_cell_shape(lattice, cell_shape);
  std::map<std::size_t, std::vector<PixelIndex>> buckets;
  for (PixelIndex p = 0; p < lattice.size(); ++p) {
    buckets[cell_of(lattice, p, cell_shape)].push_back(p);
  }
  return from_buckets(lattice, buckets, StratificationScheme::kGrid, false);
}

Stratification build_class_stratification(const PixelLattice& lattice) {
  if (lattice.empty()) throw InvalidInput("empty lattice");
  std::map<std::size_t, std::vector<PixelIndex>> buckets;
  for (PixelIndex p = 0; p < lattice.size(); ++p) {
    buckets[static_cast<std::size_t>(lattice.class_at(p))].push_back(p);
  }
  return from_buckets(lattice, buckets, StratificationScheme::kClass, true);
}

Stratification build_class_grid_stratification(const PixelLattice& lattice,
                                               std::span<const std::size_t> cell_shape) {
  check_cell_shape(lattice, cell_shape);
  const auto k = static_cast<std::size_t>(lattice.num_classes());
  std::map<std::size_t, std::vector<PixelIndex>> buckets;
  for (PixelIndex p = 0; p < lattice.size(); ++p) {
    const std::size_t key =
        cell_of(lattice, p, cell_shape) * k + static_cast<std::size_t>(lattice.class_at(p));
    buckets[key].push_back(p);
  }
  return from_buckets(lattice, buckets, StratificationScheme::kGridClass, true);
}

Stratification build_stratification(const PixelLattice& lattice, StratificationScheme scheme,
                                    std::span<const std::size_t> cell_shape) {
  switch (scheme) {
    case StratificationScheme::kGrid: return build_grid_stratification(lattice, cell_shape);
    case StratificationScheme::kClass: return build_class_stratification(lattice);
    case StratificationScheme::kGridClass:
      return build_class_grid_stratification(lattice, cell_shape);
  }
  throw InvalidInput("unknown stratification scheme");
}

}  // namespace stratvr
