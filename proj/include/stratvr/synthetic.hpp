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

#ifndef STRATVR_SYNTHETIC_HPP
#define STRATVR_SYNTHETIC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stratvr/lattice.hpp"

namespace stratvr {

// Synthetic "anatomy": nested super-ellipse rings around a jittered center.
// Pixels are ranked by a wobbly radial level and classes are handed out by
// rank, outermost first, so class counts hit the requested profile exactly
// (up to rounding). Class K-1 is the innermost blob and the rarest class.
struct SyntheticSpec {
  std::vector<std::size_t> dims{64, 64};
  int num_classes = 4;
  /// Fraction of pixels in the rarest class (ignored when K = 1).
  double smallest_fraction = 0.02;
  /// Each remaining class gets `decay` times the share of the one before it.
  double decay = 0.5;
  /// Super-ellipse exponent: 2 is an ellipse, larger is boxier.
  double exponent = 2.5;
  /// Amplitude of the angular wobble applied to ring boundaries.
  double wobble = 0.08;
  /// Standard deviation of the additive intensity noise.
  double noise = 0.1;
  std::uint64_t seed = 0;

  /// Throws InvalidInput on out-of-range fields.
  void validate() const;
};

/// Target class fractions, largest class first, summing to 1.
std::vector<double> class_profile(const SyntheticSpec& spec);

/// Feature payload per pixel: normalized coordinates (one per axis), noisy
/// intensity, and the 3^rank neighbourhood mean of the intensity.
PixelLattice generate_synthetic(const SyntheticSpec& spec);

SyntheticSpec synthetic_spec_from_json(const std::string& text);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

/// Fraction of pixels carrying class c.
double class_fraction(const PixelLattice& lattice, int c);

}  // namespace stratvr

#endif  // STRATVR_SYNTHETIC_HPP
