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

#ifndef STRATVR_LATTICE_HPP
#define STRATVR_LATTICE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stratvr {

using PixelIndex = std::size_t;

/// Integer pixel coordinate. Axes beyond the lattice rank are zero.
using Coord = std::array<std::int64_t, 3>;

/// Real-valued point in pixel units. Axes beyond the lattice rank are zero.
using Point = std::array<double, 3>;

/**
 * A 2D or 3D row-major pixel (voxel) index space with a class label per
 * pixel and an optional fixed-width real payload per pixel.
 *
 * Linear index of (i0, i1[, i2]) is ((i0 * d1) + i1) * d2 + i2.
 */
class PixelLattice {
 public:
  PixelLattice() = default;

  /// Validates the shape, class ids and payload size; throws InvalidInput.
  PixelLattice(std::vector<std::size_t> dims, int num_classes, std::vector<int> classes,
               std::size_t payload_dim = 0, std::vector<double> payload = {});

  /// All pixels labeled class 0.
  static PixelLattice uniform(std::vector<std::size_t> dims, int num_classes = 1);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return classes_.size(); }
  bool empty() const noexcept { return classes_.empty(); }
  int num_classes() const noexcept { return num_classes_; }

  int class_at(PixelIndex p) const { return classes_[p]; }
  std::span<const int> classes() const noexcept { return classes_; }

  std::size_t payload_dim() const noexcept { return payload_dim_; }
  bool has_payload() const noexcept { return payload_dim_ > 0; }
  std::span<const double> payload() const noexcept { return payload_; }
  std::span<const double> payload_at(PixelIndex p) const {
    return std::span<const double>(payload_).subspan(p * payload_dim_, payload_dim_);
  }

  Coord coord(PixelIndex p) const noexcept;
  /// Linear index of c, or nullopt when c lies outside the lattice.
  std::optional<PixelIndex> index(const Coord& c) const noexcept;

  void set_payload(std::size_t payload_dim, std::vector<double> payload);

  friend bool operator==(const PixelLattice&, const PixelLattice&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::array<std::size_t, 3> strides_{};
  int num_classes_ = 1;
  std::vector<int> classes_;
  std::size_t payload_dim_ = 0;
  std::vector<double> payload_;
};

/**
 * A group of pixels P_m. Pixels are kept sorted by linear index; the center is
 * the arithmetic mean of member coordinates.
 *
 * The reflection table maps each member to its point reflection through the
 * center. When 2c - p is not itself a member (irregular strata), the member
 * nearest to 2c - p is used instead, ties to the lowest linear index.
 */
class Stratum {
 public:
  Stratum(std::size_t id, std::vector<PixelIndex> pixels, const PixelLattice& lattice,
          std::optional<int> class_id = std::nullopt);

  std::size_t id() const noexcept { return id_; }
  std::span<const PixelIndex> pixels() const noexcept { return pixels_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  const Point& center() const noexcept { return center_; }
  std::optional<int> class_id() const noexcept { return class_id_; }

  bool contains(PixelIndex p) const noexcept;
  /// Position of p in pixels(); throws InvalidInput if p is not a member.
  std::size_t position(PixelIndex p) const;

  /// Position of the reflection partner of the member at `pos`.
  std::size_t reflected_position(std::size_t pos) const noexcept { return reflection_[pos]; }
  /// Members whose exact reflection fell outside the stratum.
  std::size_t snapped_count() const noexcept { return snapped_; }
  bool reflection_is_exact() const noexcept { return snapped_ == 0; }

 private:
  std::size_t id_;
  std::vector<PixelIndex> pixels_;
  Point center_{};
  std::optional<int> class_id_;
  std::vector<std::size_t> reflection_;
  std::size_t snapped_ = 0;
};

/// Point reflection of `pixel` through the stratum center (see Stratum).
PixelIndex reflect(const Stratum& stratum, PixelIndex pixel);

enum class StratificationScheme { kGrid, kClass, kGridClass };

std::string to_string(StratificationScheme scheme);
StratificationScheme parse_scheme(const std::string& name);

/// Disjoint cover {P_m} of a lattice's pixel set.
class Stratification {
 public:
  Stratification(std::vector<Stratum> strata, StratificationScheme scheme,
                 std::size_t population);

  std::span<const Stratum> strata() const noexcept { return strata_; }
  const Stratum& operator[](std::size_t m) const { return strata_[m]; }
  std::size_t size() const noexcept { return strata_.size(); }
  StratificationScheme scheme() const noexcept { return scheme_; }
  std::size_t population() const noexcept { return population_; }

  /// w_m = |P_m| / |P|.
  double weight(std::size_t m) const noexcept {
    return static_cast<double>(strata_[m].size()) / static_cast<double>(population_);
  }
  std::size_t snapped_count() const noexcept;

 private:
  std::vector<Stratum> strata_;
  StratificationScheme scheme_;
  std::size_t population_;
};

/// Axis-aligned cells of `cell_shape`; boundary cells may be smaller.
Stratification build_grid_stratification(const PixelLattice& lattice,
                                         std::span<const std::size_t> cell_shape);

/// One stratum per class present in the lattice.
Stratification build_class_stratification(const PixelLattice& lattice);

/// Nonempty intersections of grid cells with class regions, ordered by cell
/// then by class id.
Stratification build_class_grid_stratification(const PixelLattice& lattice,
                                               std::span<const std::size_t> cell_shape);

Stratification build_stratification(const PixelLattice& lattice, StratificationScheme scheme,
                                    std::span<const std::size_t> cell_shape);

// Lattice files: a JSON header {"dims", "K", "payload_dim", "csv"} next to a
// row-major CSV with columns class,payload_0..payload_{d-1}.

void save_lattice(const PixelLattice& lattice, const std::filesystem::path& json_path);
PixelLattice load_lattice(const std::filesystem::path& json_path);

}  // namespace stratvr

#endif  // STRATVR_LATTICE_HPP
