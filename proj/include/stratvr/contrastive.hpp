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

#ifndef STRATVR_CONTRASTIVE_HPP
#define STRATVR_CONTRASTIVE_HPP

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "stratvr/lattice.hpp"
#include "stratvr/sampling.hpp"

namespace stratvr {

using Vec = std::vector<double>;

/// Rows shorter than this are treated as zero when normalizing.
inline constexpr double kNormFloor = 1e-12;

/// Dense per-pixel outputs of a segmentation network: raw embeddings, their
/// L2-normalized rows, and class logits. All arrays are row-major by pixel.
struct RepresentationMap {
  enum class Source { kStudent, kTeacher };

  std::size_t pixels = 0;
  std::size_t dim = 0;      // n_rep
  std::size_t classes = 0;  // K
  std::vector<double> raw;
  std::vector<double> embeddings;
  std::vector<double> norms;
  std::vector<double> logits;
  Source source = Source::kStudent;

  /// Normalizes `raw` row-wise; throws InvalidInput on size mismatch.
  static RepresentationMap from_raw(std::vector<double> raw, std::size_t dim,
                                    std::vector<double> logits, std::size_t classes,
                                    Source source = Source::kStudent);

  std::span<const double> embedding(std::size_t p) const {
    return std::span<const double>(embeddings).subspan(p * dim, dim);
  }
  std::span<const double> raw_embedding(std::size_t p) const {
    return std::span<const double>(raw).subspan(p * dim, dim);
  }
  std::span<const double> logit(std::size_t p) const {
    return std::span<const double>(logits).subspan(p * classes, classes);
  }
};

/// Backpropagates a gradient on r = z / max(|z|, floor) to z.
void normalize_backward(std::span<const double> raw, double norm, std::span<const double> grad_normalized,
                        std::span<double> grad_raw);

struct ClassKeys {
  int class_id = 0;
  std::vector<Vec> queries;    // R_q^c, one entry per anchor occurrence
  std::vector<Vec> negatives;  // R_k^c
  Vec positive;                // r_k^{c,+}: renormalized mean of the queries
  Vec positive_mean;           // the mean before renormalization
  std::vector<PixelIndex> query_pixels;
  std::vector<PixelIndex> negative_pixels;
};

struct KeySets {
  std::vector<ClassKeys> classes;  // ascending class id; absent classes omitted
};

/// Queries, negatives and positive keys over the anchor multiset. Anchors are
/// sorted first, so the result depends only on the multiset.
KeySets build_key_sets(const RepresentationMap& map, std::span<const int> labels,
                       std::span<const PixelIndex> anchors);
KeySets build_key_sets(const RepresentationMap& map, std::span<const int> labels,
                       const SampleSet& anchors);

/// Pixel contrastive loss, summed over classes and queries.
double contrastive_loss(const KeySets& keys, double tau);

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Loss and gradient with respect to the normalized embeddings (pixels x dim).
/// Repeated anchors accumulate into the same row.
LossGrad contrastive_loss_grad(const RepresentationMap& map, std::span<const int> labels,
                               std::span<const PixelIndex> anchors, double tau);

/// KL(p_s || p_t) where p_s = softmax_n(cos(student, mined_n) / tau_s) and
/// p_t = softmax_n(cos(teacher, mined_n) / tau_t). The teacher side is a
/// constant target; the gradient is taken with respect to `student` only.
double instance_discrimination_loss(std::span<const double> student, std::span<const double> teacher,
                                    std::span<const Vec> mined, double tau_s, double tau_t);
LossGrad instance_discrimination_loss_grad(std::span<const double> student,
                                           std::span<const double> teacher,
                                           std::span<const Vec> mined, double tau_s, double tau_t);

/// Fixed-capacity first-in-first-out queue of embeddings.
class MemoryBank {
 public:
  struct Entry {
    Vec embedding;
    int class_id = 0;
  };

  static constexpr std::size_t kDefaultCapacity = 36;

  explicit MemoryBank(std::size_t capacity = kDefaultCapacity);

  /// Appends in order, evicting the oldest entries beyond capacity.
  void push(std::span<const Entry> items);
  void push(Entry item);

  const std::deque<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

/// -(1 / (|Q| K_eff)) * sum of cosine similarities between each query and its
/// K_eff = min(k, |bank|) most similar bank entries (ties: oldest first).
/// The bank is constant; the gradient is with respect to the raw queries,
/// laid out row-major.
double nn_loss(std::span<const Vec> queries, const MemoryBank& bank, std::size_t k);
LossGrad nn_loss_grad(std::span<const Vec> queries, const MemoryBank& bank, std::size_t k);

/// theta_t <- m * theta_t + (1 - m) * theta_s, elementwise.
std::vector<double>& ema_update(std::vector<double>& teacher, std::span<const double> student,
                                double momentum);

/// Cross-entropy of the student against the teacher's argmax pseudo-labels,
/// averaged over pixels. Gradient with respect to the student logits.
LossGrad unsup_loss_grad(std::span<const double> student_logits,
                         std::span<const double> teacher_logits, std::size_t classes);
double unsup_loss(std::span<const double> student_logits, std::span<const double> teacher_logits,
                  std::size_t classes);

/// Smoothing added to numerator and denominator of the soft Dice ratio.
inline constexpr double kDiceSmoothing = 1e-5;

struct SupLoss {
  double value = 0.0;  // 0.5 * dice + 0.5 * cross_entropy
  double dice = 0.0;   // soft Dice loss averaged over classes
  double cross_entropy = 0.0;
  std::vector<double> grad;  // with respect to the logits
};

SupLoss sup_loss_grad(std::span<const double> logits, std::span<const int> labels,
                      std::size_t classes);
double sup_loss(std::span<const double> logits, std::span<const int> labels, std::size_t classes);

struct FineTuneConfig {
  double tau = 0.5;
  double tau_s = 0.1;
  double tau_t = 0.01;
  double lambda1 = 0.01;  // contrastive
  double lambda2 = 1.0;   // unsupervised
  double lambda3 = 1.0;   // nearest neighbour
  double ema_momentum = 0.99;
  std::size_t k_nn = 5;
  std::size_t d_mined = 5;
  std::size_t bank_capacity = MemoryBank::kDefaultCapacity;

  /// Throws InvalidInput when a field is out of range.
  void validate() const;
};

/// Reads fields by name from a JSON object; absent fields keep their defaults.
FineTuneConfig finetune_config_from_json(const std::string& text);
std::string finetune_config_to_json(const FineTuneConfig& config);

struct LossParts {
  double sup = 0.0;
  double contrast = 0.0;
  double unsup = 0.0;
  double nn = 0.0;
};

/// sup + lambda1 * contrast + lambda2 * unsup + lambda3 * nn.
double total_finetune_loss(const LossParts& parts, const FineTuneConfig& config);

/// One JSON object per line for step logs.
std::string loss_parts_to_json_line(std::size_t step, const LossParts& parts, double total);

// Small numeric helpers shared with the trainer.
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
/// log(sum(exp(x))) without overflow.
double log_sum_exp(std::span<const double> x);

}  // namespace stratvr

#endif  // STRATVR_CONTRASTIVE_HPP
