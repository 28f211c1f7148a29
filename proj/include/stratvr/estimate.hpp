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

#ifndef STRATVR_ESTIMATE_HPP
#define STRATVR_ESTIMATE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratvr/lattice.hpp"
#include "stratvr/sampling.hpp"

namespace stratvr {

/// A deterministic per-pixel function h(x; p).
struct PixelFunction {
  std::function<double(const PixelLattice&, PixelIndex)> eval;
  std::string name;
};

/// h evaluated at every pixel, in linear index order.
std::vector<double> tabulate(const PixelLattice& lattice, const PixelFunction& h);

/// H(x) = mean of h over all pixels, with compensated summation.
double aggregate_exact(const PixelLattice& lattice, const PixelFunction& h);
double aggregate_exact(std::span<const double> values);

/// Plain mean for naive samples; sum_m w_m * mean(h over D_m) for stratified
/// ones. In kExact mode a stratum without draws contributes its exact mean.
double estimate(const SampleSet& sample, const Stratification& stratification,
                std::span<const double> values, EmptyStrata mode = EmptyStrata::kGuaranteeOne);
double estimate(const SampleSet& sample, const Stratification& stratification,
                const PixelLattice& lattice, const PixelFunction& h,
                EmptyStrata mode = EmptyStrata::kGuaranteeOne);
/// Mean over every drawn pixel, ignoring strata.
double estimate_pooled(const SampleSet& sample, std::span<const double> values);
/// The equal-weight form (1/M) sum_m mean(h over D_m).
double estimate_equal_weight(const SampleSet& sample, std::span<const double> values);

struct StratumMoments {
  std::size_t size = 0;
  double weight = 0.0;        // w_m
  std::size_t draws = 0;      // n_m
  double mean = 0.0;          // mu_m
  double variance = 0.0;      // sigma_m^2
  double covariance = 0.0;    // Cov(h(p), h(reflect(p))), p uniform on P_m
  double reflected_mean = 0.0;
  double reflected_variance = 0.0;
  double pair_variance = 0.0;  // Var(h(p) + h(reflect(p)))
  bool exact_reflection = true;
};

struct MonteCarloStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance of the estimates
  std::size_t trials = 0;
};

struct SamplerSummary {
  Sampler sampler = Sampler::kNaive;
  double analytic_mean = 0.0;
  double analytic_variance = 0.0;
  std::optional<MonteCarloStats> monte_carlo;
};

struct VarianceReport {
  std::string function_name;
  double h_true = 0.0;
  double population_mean = 0.0;      // mu
  double population_variance = 0.0;  // sigma^2, enumerated over all pixels
  std::size_t n = 0;
  bool exactly_proportional = false;
  std::size_t snapped_reflections = 0;
  std::vector<StratumMoments> per_stratum;

  double var_ns = 0.0;
  double var_sg = 0.0;
  double var_sag = 0.0;
  /// Expectation of the SAG estimator; differs from h_true only when a
  /// stratum's reflection is not a bijection.
  double mean_sag = 0.0;
  /// sum_m sigma_m^2 n_m / n, an alternative SG variance expression reported
  /// next to var_sg for comparison.
  double var_sg_statement_form = 0.0;
  double gap_weighted = 0.0;    // (1/n) sum_m w_m (mu_m - mu)^2
  double gap_unweighted = 0.0;  // (1/n) sum_m (mu_m - mu)^2

  std::vector<SamplerSummary> samplers;

  const SamplerSummary* find(Sampler s) const;
};

/// Exact moments by enumeration over every stratum.
VarianceReport analytic_variance(const PixelLattice& lattice, const Stratification& stratification,
                                 const Allocation& allocation, const PixelFunction& h);
VarianceReport analytic_variance(std::span<const double> values,
                                 const Stratification& stratification,
                                 const Allocation& allocation, std::string function_name = "h");

struct MonteCarloOptions {
  std::vector<Sampler> samplers{Sampler::kNaive, Sampler::kStratified, Sampler::kAntithetic};
  std::size_t jobs = 1;
  EmptyStrata empty_strata = EmptyStrata::kGuaranteeOne;
};

/// Analytic report plus `trials` independent estimates per sampler. Trial t of
/// sampler s reads streams keyed by (derive_seed(seed, s), stratum, t), so the
/// result is bitwise independent of `jobs`.
VarianceReport monte_carlo_study(const PixelLattice& lattice, const Stratification& stratification,
                                 const PixelFunction& h, std::size_t n, std::size_t trials,
                                 std::uint64_t seed, const MonteCarloOptions& options = {});

/// Raw per-trial estimates, in trial order.
std::vector<double> monte_carlo_estimates(Sampler sampler, const PixelLattice& lattice,
                                          const Stratification& stratification,
                                          const Allocation& allocation,
                                          std::span<const double> values, std::size_t trials,
                                          std::uint64_t seed, std::size_t jobs = 1);

std::uint64_t sampler_seed(std::uint64_t seed, Sampler sampler);

// --- checks -----------------------------------------------------------------

enum class CheckStatus { kPass, kFail, kNotApplicable };
std::string to_string(CheckStatus status);

struct TheoremCheck {
  CheckStatus status = CheckStatus::kNotApplicable;
  double gap_analytic = 0.0;  // var_ns - var_sg
  double gap_formula = 0.0;   // (1/n) sum_m w_m (mu_m - mu)^2
  double gap_unweighted = 0.0;
  double relative_error = 0.0;
};

/// Relative tolerance of the SG/NS gap identity.
inline constexpr double kGapRelativeTolerance = 1e-10;

/// Needs an exactly proportional allocation; otherwise kNotApplicable.
TheoremCheck check_theorem_sg(const VarianceReport& report, const Allocation& allocation);

struct LemmaCheck {
  CheckStatus status = CheckStatus::kPass;
  double ratio = 0.0;  // var_sag / var_sg, 0 when both vanish
  double bound = 0.0;  // 2 var_sg
};

inline constexpr double kLemmaAbsoluteSlack = 1e-12;
LemmaCheck check_lemma_sag(const VarianceReport& report);

struct TotalVarianceCheck {
  CheckStatus status = CheckStatus::kPass;
  double direct = 0.0;      // sigma^2
  double decomposed = 0.0;  // sum w_m sigma_m^2 + sum w_m (mu_m - mu)^2
  double relative_error = 0.0;
};

TotalVarianceCheck check_total_variance(const VarianceReport& report, double tolerance = 1e-10);

/// |a - b| relative to the larger magnitude; 0 when both are 0.
double relative_difference(double a, double b) noexcept;

// --- serialization ------------------------------------------------------------

std::string report_to_json(const VarianceReport& report);
/// One row per sampler.
std::string report_to_csv(const VarianceReport& report);

}  // namespace stratvr

#endif  // STRATVR_ESTIMATE_HPP
