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

#ifndef STRATVR_HARNESS_HPP
#define STRATVR_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stratvr/estimate.hpp"
#include "stratvr/lattice.hpp"
#include "stratvr/sampling.hpp"
#include "stratvr/synthetic.hpp"
#include "stratvr/trainer.hpp"

namespace stratvr {

// Orchestration behind the command-line tool. Every run is a pure function of
// its config; the `jobs` fields only change how work is spread over threads.

// --- inputs ---------------------------------------------------------------------

/// Either a lattice file written by gen-data or an inline synthetic spec.
struct LatticeSource {
  std::filesystem::path file;
  std::optional<SyntheticSpec> synthetic;

  PixelLattice load() const;
};

/// Named per-pixel functions for variance studies.
///   payload          payload column `column`
///   class_indicator  1 on class `class_id`, else 0
///   linear           sum_a weights[a] * coordinate_a (reflection-odd inside
///                    strata whose reflection is exact)
///   center_distance  squared distance to the pixel's stratum center
///                    (reflection-even)
///   values           explicit table, one value per pixel
struct FunctionSpec {
  std::string kind = "payload";
  std::size_t column = 0;
  int class_id = 0;
  std::vector<double> weights{1.0, 1.0, 1.0};
  std::vector<double> values;
};

PixelFunction make_pixel_function(const FunctionSpec& spec, const PixelLattice& lattice,
                                  const Stratification& stratification);

// --- checks ---------------------------------------------------------------------

struct CheckRecord {
  std::string name;
  CheckStatus status = CheckStatus::kNotApplicable;
  std::string detail;
};

/// The checks.json written next to every command's outputs.
struct CheckList {
  std::string command;
  std::vector<CheckRecord> checks;
  std::vector<std::string> plots;  // plot-data files in the same directory

  bool any_failed() const;
  void add(std::string name, CheckStatus status, std::string detail);
};

std::string checks_to_json(const CheckList& list);
CheckList checks_from_json(const std::string& text);

// --- gen-data ---------------------------------------------------------------------

struct GenDataOutcome {
  PixelLattice lattice;
  std::vector<double> fractions;  // measured, per class
  CheckList checks;
};

/// Smallest-class fraction must land within 20% (relative) of the request.
GenDataOutcome run_gen_data(const SyntheticSpec& spec);
/// lattice.json + lattice.csv, spec.json, checks.json.
void write_gen_data_outputs(const GenDataOutcome& outcome, const SyntheticSpec& spec,
                            const std::filesystem::path& out_dir);

// --- variance study ------------------------------------------------------------------

struct VarianceConfig {
  LatticeSource lattice;
  FunctionSpec function;
  StratificationScheme scheme = StratificationScheme::kGridClass;
  std::vector<std::size_t> cell_shape{8, 8};
  std::vector<Sampler> samplers{Sampler::kNaive, Sampler::kStratified, Sampler::kAntithetic};
  std::size_t n = 256;
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  EmptyStrata empty_strata = EmptyStrata::kGuaranteeOne;
  std::size_t jobs = 1;

  void validate() const;
};

/// Relative paths inside the config resolve against `base_dir`.
VarianceConfig variance_config_from_json(const std::string& text,
                                         const std::filesystem::path& base_dir = {});
std::string variance_config_to_json(const VarianceConfig& config);

/// Monte-Carlo variance is compared with the analytic value only from this many
/// trials on; below it the check is reported as not applicable.
inline constexpr std::size_t kMinTrialsForVarianceCheck = 10000;
inline constexpr double kVarianceRelativeTolerance = 0.10;
/// Monte-Carlo mean band, in standard errors.
inline constexpr double kMeanBandSigmas = 4.0;

struct VarianceOutcome {
  VarianceReport report;
  CheckList checks;
  bool sample_exceeds_population = false;
};

VarianceOutcome run_variance_study(const VarianceConfig& config);
/// variance_report.json/.csv, plot_sampler_variance.csv,
/// plot_gap_decomposition.csv, config.json, checks.json.
void write_variance_outputs(const VarianceOutcome& outcome, const VarianceConfig& config,
                            const std::filesystem::path& out_dir);

// --- convergence -----------------------------------------------------------------------

struct ConvergenceExperiment {
  LatticeSource data;
  TrainConfig train;
  std::vector<Sampler> samplers{Sampler::kNaive, Sampler::kStratified, Sampler::kAntithetic};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  /// Checkpoints at which SG may exceed NS in inter-seed variance.
  std::size_t allowed_inversions = 1;
  std::size_t jobs = 1;
};

ConvergenceExperiment convergence_experiment_from_json(const std::string& text,
                                                       const std::filesystem::path& base_dir = {});
std::string convergence_experiment_to_json(const ConvergenceExperiment& experiment);

struct SamplerRuns {
  Sampler sampler = Sampler::kNaive;
  std::vector<TrajectoryLog> runs;  // seed order; diverged runs hold partial logs
};

/// Per-checkpoint mean and unbiased variance of a metric across finished runs.
struct CheckpointStats {
  std::vector<std::size_t> steps;
  std::vector<double> mean;
  std::vector<double> variance;
};

enum class CheckpointMetric { kTrainContrast, kEvalContrast };
CheckpointStats checkpoint_stats(const SamplerRuns& runs, CheckpointMetric metric);

struct StabilityCheck {
  CheckStatus status = CheckStatus::kNotApplicable;
  bool final_mean_ok = false;
  std::size_t checkpoints = 0;
  std::size_t variance_not_above = 0;  // checkpoints with var_sg <= var_ns
  CheckpointStats ns;
  CheckpointStats sg;
};

/// SG's final-checkpoint mean <= NS's, and SG's variance <= NS's at all but
/// `allowed_inversions` checkpoints. Uses the epoch-mean training loss.
StabilityCheck check_stability(const SamplerRuns& ns, const SamplerRuns& sg,
                               std::size_t allowed_inversions);

/// Epochs (of T / checkpoints steps) until the gradient-norm threshold; runs
/// that never reach it count as the full horizon.
double mean_epochs_to_threshold(const SamplerRuns& runs, const TrainConfig& config,
                                std::size_t* censored = nullptr);

struct ConvergenceOutcome {
  std::vector<SamplerRuns> samplers;
  CheckList checks;
  const SamplerRuns* find(Sampler s) const;
};

ConvergenceOutcome run_convergence(const ConvergenceExperiment& experiment);
/// trajectory_<s>.csv, trajectory_<s>_mean_std.csv, checkpoints_<s>.csv,
/// summary.json, config.json, checks.json.
void write_convergence_outputs(const ConvergenceOutcome& outcome,
                               const ConvergenceExperiment& experiment,
                               const std::filesystem::path& out_dir);

// --- noise sweep on the quadratic testbed -----------------------------------------------

struct SweepConfig {
  QuadraticTestbed testbed;
  std::vector<double> sigmas{0.0, 0.02, 0.04, 0.08};
  std::vector<std::size_t> horizons{1000, 2000, 4000, 8000, 16000};
  std::vector<std::uint64_t> seeds;  // 30 seeds from 0 when empty
  /// Sign-test level for the slow-rate trend.
  double significance = 0.05;
};

SweepConfig sweep_config_from_json(const std::string& text);
std::string sweep_config_to_json(const SweepConfig& config);

struct SweepOutcome {
  std::vector<NoiseLevelResult> levels;
  RateTrend trend;
  CheckList checks;
};

SweepOutcome run_sigma_sweep(const SweepConfig& config);
/// sweep_steps.csv, sweep_rate_fits.csv, sweep_summary.json, config.json,
/// checks.json.
void write_sweep_outputs(const SweepOutcome& outcome, const SweepConfig& config,
                         const std::filesystem::path& out_dir);

// --- single training run ------------------------------------------------------------------

struct TrainExperiment {
  LatticeSource labeled;
  std::optional<LatticeSource> unlabeled;
  TrainConfig train;
  Sampler sampler = Sampler::kStratified;
  std::uint64_t seed = 0;
};

TrainExperiment train_experiment_from_json(const std::string& text,
                                           const std::filesystem::path& base_dir = {});
std::string train_experiment_to_json(const TrainExperiment& experiment);

struct TrainOutcome {
  TrajectoryLog log;
  std::vector<double> dice;  // per class on the labeled image; empty if diverged
  CheckList checks;
};

TrainOutcome run_train(const TrainExperiment& experiment);
/// steps.jsonl, trajectory.csv, summary.json, config.json, checks.json.
void write_train_outputs(const TrainOutcome& outcome, const TrainExperiment& experiment,
                         const std::filesystem::path& out_dir);

// --- report ------------------------------------------------------------------------------

struct ReportSummary {
  std::string text;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t not_applicable = 0;
  std::size_t sources = 0;  // checks.json files found
};

/// Collects every checks.json below `dir`. Throws IoError when `dir` is not a
/// readable directory.
ReportSummary build_report(const std::filesystem::path& dir);

}  // namespace stratvr

#endif  // STRATVR_HARNESS_HPP
