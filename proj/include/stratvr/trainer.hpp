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

#ifndef STRATVR_TRAINER_HPP
#define STRATVR_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stratvr/contrastive.hpp"
#include "stratvr/errors.hpp"
#include "stratvr/lattice.hpp"
#include "stratvr/sampling.hpp"

namespace stratvr {

struct ModelShape {
  std::size_t features = 4;
  std::size_t hidden = 16;
  std::size_t classes = 2;  // K
  std::size_t embed = 8;    // n_rep

  std::size_t parameter_count() const noexcept;
  bool operator==(const ModelShape&) const = default;
};

/// Per-pixel MLP: features -> tanh hidden layer -> (class logits, raw
/// embedding). Parameters live in one flat vector laid out as
/// W1 (hidden x features), b1, W_logit (classes x hidden), b_logit,
/// W_embed (embed x hidden), b_embed, each matrix row-major.
class ToyModel {
 public:
  ToyModel(ModelShape shape, std::vector<double> params);

  static ToyModel zeros(ModelShape shape);
  /// Gaussian weights scaled by gain/sqrt(fan-in) (gain applies to the input
  /// layer only), zero biases.
  static ToyModel random(ModelShape shape, std::uint64_t seed, double input_gain = 1.0);

  const ModelShape& shape() const noexcept { return shape_; }
  std::span<const double> params() const noexcept { return params_; }
  std::vector<double>& mutable_params() noexcept { return params_; }

 private:
  ModelShape shape_;
  std::vector<double> params_;
};

/// Forward activations kept for the backward pass. Row i of `map` belongs to
/// lattice pixel `pixels[i]`.
struct ForwardCache {
  std::vector<PixelIndex> pixels;
  std::vector<double> hidden;
  RepresentationMap map;
};

/// Runs the model on every pixel (or only on `pixels`, in the given order).
/// Throws InvalidInput when the payload width differs from the model's input.
ForwardCache forward_pass(const ToyModel& model, const PixelLattice& lattice);
ForwardCache forward_pass(const ToyModel& model, const PixelLattice& lattice,
                          std::span<const PixelIndex> pixels);
RepresentationMap forward(const ToyModel& model, const PixelLattice& lattice);

/// Accumulates into `grad_params` the gradient given gradients on the logits
/// and on the normalized embeddings of the cached rows. Either input may be
/// empty, meaning zero.
void backward(const ToyModel& model, const PixelLattice& lattice, const ForwardCache& cache,
              std::span<const double> grad_logits, std::span<const double> grad_embeddings,
              std::span<double> grad_params);
/// Same, with the embedding gradient given on the raw (unnormalized) rows.
void backward_raw(const ToyModel& model, const PixelLattice& lattice, const ForwardCache& cache,
                  std::span<const double> grad_logits, std::span<const double> grad_raw,
                  std::span<double> grad_params);

/// Labeled image (class map is ground truth) and/or unlabeled image. The
/// contrastive and nearest-neighbour terms use the labeled image when present,
/// otherwise the unlabeled one with teacher pseudo-labels.
struct Batch {
  const PixelLattice* labeled = nullptr;
  const PixelLattice* unlabeled = nullptr;

  const PixelLattice& contrast_image() const;
};

struct ObjectiveOptions {
  FineTuneConfig loss;
  /// Multiplier on the supervised term (1 in the fine-tuning objective).
  double sup_weight = 1.0;
};

struct LossEvaluation {
  LossParts parts;  // unweighted terms
  double total = 0.0;
  std::vector<double> grad;  // with respect to the student parameters
  std::size_t queries = 0;   // anchors that entered the contrastive term
};

/// Exact gradient of sup_weight * L_sup + lambda1 * L_contrast + lambda2 * L_unsup
/// + lambda3 * L_nn with the contrastive and nearest-neighbour terms restricted
/// to `anchors` (pixels of the contrast image). The nn term is skipped when
/// `bank` is null or empty. The teacher only supplies constant targets.
LossEvaluation grad_total_loss(const ToyModel& student, const ToyModel& teacher, const Batch& batch,
                               std::span<const PixelIndex> anchors, const ObjectiveOptions& options,
                               const MemoryBank* bank = nullptr);
LossEvaluation grad_total_loss(const ToyModel& student, const ToyModel& teacher, const Batch& batch,
                               const SampleSet& anchors, const ObjectiveOptions& options,
                               const MemoryBank* bank = nullptr);

/// Teacher class means over the anchors (renormalized), one entry per present
/// class in ascending order; these feed the memory bank.
std::vector<MemoryBank::Entry> teacher_bank_entries(const ToyModel& teacher, const Batch& batch,
                                                    std::span<const PixelIndex> anchors);

/// Instance-discrimination warm-up loss on one image: the student and teacher
/// global embeddings are the pixel means of their raw embeddings, and the mined
/// views are teacher means over `views` horizontal bands of the image.
LossGrad pretrain_loss_grad(const ToyModel& student, const ToyModel& teacher,
                            const PixelLattice& image, const FineTuneConfig& config);

enum class StepRule {
  /// eta = min{1 / L_hat, alpha / (sigma_hat * sqrt(T))}
  kProposition,
  kConstant,
};

struct ConvergenceConfig {
  std::size_t steps = 200;  // T
  StepRule rule = StepRule::kProposition;
  double alpha = 1.0;
  double constant_rate = 0.01;
  /// Fixed estimates; zero means "estimate at the initial parameters".
  double l_hat = 0.0;
  double sigma_hat = 0.0;
  std::size_t smoothness_probes = 5;
  std::size_t noise_draws = 16;
  std::size_t checkpoints = 10;
  /// Steps-to-threshold: first step whose trailing mean of |g|^2 (window
  /// T / checkpoints) falls to threshold * |g_0|^2.
  double threshold = 1e-3;

  void validate() const;
};

struct TrainConfig {
  std::size_t hidden = 16;
  std::size_t embed = 8;
  /// Seeds the initial weights; shared by every run so runs differ only in
  /// the anchor draws.
  std::uint64_t init_seed = 1;
  double init_gain = 1.0;
  StratificationScheme scheme = StratificationScheme::kGridClass;
  std::vector<std::size_t> cell_shape{32, 32};
  std::size_t anchors = 256;
  EmptyStrata empty_strata = EmptyStrata::kGuaranteeOne;
  ObjectiveOptions objective;
  ConvergenceConfig schedule;
  std::size_t pretrain_steps = 0;
  double pretrain_rate = 0.05;
  /// Checkpoint metric anchors: every `eval_stride`-th pixel along each axis.
  std::size_t eval_stride = 4;

  void validate() const;
};

/// Model input and output sizes implied by the data and config.
ModelShape model_shape(const Batch& data, const TrainConfig& config);

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);

struct StepRecord {
  std::size_t step = 0;
  LossParts parts;
  double total = 0.0;
  double grad_sq_norm = 0.0;
};

/// Checkpoints close an "epoch" of T / checkpoints steps.
struct Checkpoint {
  std::size_t step = 0;
  /// Training L_contrast per query, averaged over the epoch's steps.
  double train_contrast = 0.0;
  /// Mean per-query contrastive loss of the student on the evaluation anchors.
  double eval_contrast = 0.0;
};

struct TrajectoryLog {
  std::uint64_t seed = 0;
  Sampler sampler = Sampler::kNaive;
  double step_size = 0.0;
  double l_hat = 0.0;
  double sigma_hat = 0.0;
  std::vector<double> pretrain_losses;
  std::vector<StepRecord> steps;
  std::vector<Checkpoint> checkpoints;
  std::optional<std::size_t> steps_to_threshold;
  bool diverged = false;
  std::vector<double> final_params;  // student after the last step
  double wall_seconds = 0.0;  // not serialized
};

/// Raised by sgd_train on a non-finite loss; carries the steps run so far.
class TrainingDiverged : public Diverged {
 public:
  TrainingDiverged(const std::string& what, TrajectoryLog partial)
      : Diverged(what), partial_(std::move(partial)) {}
  const TrajectoryLog& partial() const noexcept { return partial_; }

 private:
  TrajectoryLog partial_;
};

struct StepSizeEstimate {
  double l_hat = 0.0;
  double sigma_hat = 0.0;
  double step_size = 0.0;
};

/// L_hat: largest |g(theta') - g(theta)| / |theta' - theta| over random probes
/// near theta with shared anchors. sigma_hat: spread of sampled gradients at
/// theta for the given sampler.
StepSizeEstimate estimate_step_size(const ToyModel& model, const Batch& data, Sampler sampler,
                                    const TrainConfig& config);

/// T steps of SGD on fresh anchors each step, with EMA teacher and memory
/// bank. Deterministic in (data, sampler, config, seed).
TrajectoryLog sgd_train(const Batch& data, Sampler sampler, const TrainConfig& config,
                        std::uint64_t seed);

/// Mean per-query contrastive loss on every `stride`-th pixel per axis, using
/// the image's class map.
double evaluate_contrast(const ToyModel& model, const PixelLattice& image, std::size_t stride,
                         double tau);
std::vector<PixelIndex> strided_anchors(const PixelLattice& image, std::size_t stride);

/// CSV rows "seed,step,loss_total,loss_contrast,loss_nn,loss_unsup,loss_sup,grad_sq_norm".
std::string trajectory_csv_header();
std::string trajectory_csv_rows(const TrajectoryLog& log);

// --- controlled-noise quadratic testbed ----------------------------------------

/// f(theta) = 0.5 * sum_i c_i theta_i^2 with curvatures evenly spaced in
/// [min_curvature, smoothness], started from theta = 1. Noisy gradients add
/// isotropic Gaussian noise with E|xi|^2 = sigma^2.
struct QuadraticTestbed {
  std::size_t dim = 10;
  double min_curvature = 0.1;
  double smoothness = 1.0;  // L
  double alpha = 1.0;
  double threshold = 1e-3;  // on |grad f|^2
  std::size_t horizon = 10000;

  void validate() const;
  std::vector<double> curvatures() const;
  /// min{1 / L, alpha / (sigma * sqrt(T))}; 1 / L when sigma = 0.
  double step_size(double sigma, std::size_t steps) const;
};

struct DescentRun {
  std::size_t steps = 0;  // horizon when censored
  bool censored = false;
};

/// Noisy GD with the horizon's step size until |grad f|^2 <= threshold.
DescentRun steps_to_threshold(const QuadraticTestbed& bed, double sigma, std::uint64_t seed);

struct NoiseLevelResult {
  double sigma = 0.0;
  double step_size = 0.0;
  std::vector<DescentRun> runs;  // one per seed
  double mean_steps = 0.0;
  double std_steps = 0.0;
  std::size_t censored = 0;
};

std::vector<NoiseLevelResult> noise_controlled_descent(const QuadraticTestbed& bed,
                                                       std::span<const double> sigmas,
                                                       std::span<const std::uint64_t> seeds);

/// (1 / T) sum_{t < T} |grad f(theta_t)|^2 for a run of length T.
double average_sq_grad(const QuadraticTestbed& bed, double sigma, std::size_t steps,
                       std::uint64_t seed);

struct RateFit {
  double c1 = 0.0;  // fast-rate coefficient (1 / T)
  double c2 = 0.0;  // slow-rate coefficient (1 / sqrt(T))
};

/// Least squares fit of y_T = c1 / T + c2 / sqrt(T).
RateFit fit_rate_constants(std::span<const std::size_t> horizons, std::span<const double> values);

struct RateTrend {
  std::vector<double> sigmas;
  std::vector<std::size_t> horizons;
  std::vector<std::vector<RateFit>> fits;  // [seed][sigma]
  std::vector<double> slopes;              // per seed, slope of c2 against sigma
  std::size_t positive = 0;
  double p_value = 1.0;  // one-sided sign test
};

RateTrend rate_trend(const QuadraticTestbed& bed, std::span<const double> sigmas,
                     std::span<const std::size_t> horizons, std::span<const std::uint64_t> seeds);

/// P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p_value(std::size_t k, std::size_t n);

/// 2|A n B| / (|A| + |B|) for the masks of class c; 1 when both are empty.
double dice(std::span<const int> predicted, std::span<const int> truth, int c);

/// Argmax class per pixel of a representation map.
std::vector<int> predict_labels(const RepresentationMap& map);

}  // namespace stratvr

#endif  // STRATVR_TRAINER_HPP
