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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "stratvr/io.hpp"
#include "stratvr/rng.hpp"
#include "stratvr/trainer.hpp"

namespace stratvr {

namespace {

constexpr std::uint64_t kSmoothnessTag = 0x4C48;
constexpr std::uint64_t kNoiseTag = 0x5347;

std::size_t argmax(std::span<const double> x) {
  return static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
}

std::vector<PixelIndex> sorted_unique(std::span<const PixelIndex> anchors) {
  std::vector<PixelIndex> u(anchors.begin(), anchors.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Model rows for the contrast image: every pixel when a full-image term needs
// them, otherwise only the distinct anchors. `local` maps anchors to rows.
struct ContrastView {
  ForwardCache student;
  std::vector<int> labels;
  std::vector<PixelIndex> local;
};

ContrastView contrast_view(const ToyModel& student, const ToyModel& teacher, const Batch& batch,
                           std::span<const PixelIndex> anchors, bool full) {
  const PixelLattice& image = batch.contrast_image();
  if (anchors.empty()) throw InvalidInput("anchor set is empty");
  for (PixelIndex p : anchors) {
    if (p >= image.size()) throw InvalidInput("anchor outside the contrast image");
  }
  ContrastView v;
  std::vector<PixelIndex> rows;
  if (full) {
    rows.resize(image.size());
    std::iota(rows.begin(), rows.end(), PixelIndex{0});
    v.local.assign(anchors.begin(), anchors.end());
  } else {
    rows = sorted_unique(anchors);
    v.local.reserve(anchors.size());
    for (PixelIndex p : anchors) {
      v.local.push_back(static_cast<PixelIndex>(std::lower_bound(rows.begin(), rows.end(), p) - rows.begin()));
    }
  }
  v.student = forward_pass(student, image, rows);
  v.labels.resize(rows.size());
  if (batch.labeled != nullptr) {
    for (std::size_t i = 0; i < rows.size(); ++i) v.labels[i] = image.class_at(rows[i]);
  } else {
    const auto t = forward_pass(teacher, image, rows);
    for (std::size_t i = 0; i < rows.size(); ++i) v.labels[i] = static_cast<int>(argmax(t.map.logit(i)));
  }
  return v;
}

}  // namespace

const PixelLattice& Batch::contrast_image() const {
  if (labeled != nullptr) return *labeled;
  if (unlabeled != nullptr) return *unlabeled;
  throw InvalidInput("batch has no images");
}

LossEvaluation grad_total_loss(const ToyModel& student, const ToyModel& teacher, const Batch& batch,
                               std::span<const PixelIndex> anchors, const ObjectiveOptions& options,
                               const MemoryBank* bank) {
  const FineTuneConfig& cfg = options.loss;
  cfg.validate();
  if (!(options.sup_weight >= 0.0)) throw InvalidInput("sup_weight must be >= 0");
  if (!(student.shape() == teacher.shape())) throw InvalidInput("student and teacher shapes differ");
  const ModelShape& s = student.shape();

  const bool use_sup = batch.labeled != nullptr && options.sup_weight > 0.0;
  ContrastView v = contrast_view(student, teacher, batch, anchors, use_sup);
  const PixelLattice& image = batch.contrast_image();
  const std::size_t rows = v.student.pixels.size();

  LossEvaluation out;
  out.grad.assign(s.parameter_count(), 0.0);
  out.queries = anchors.size();
  std::vector<double> g_logits(use_sup ? rows * s.classes : 0, 0.0);
  std::vector<double> g_embed(rows * s.embed, 0.0);

  if (use_sup) {
    const SupLoss sup = sup_loss_grad(v.student.map.logits, v.labels, s.classes);
    out.parts.sup = sup.value;
    for (std::size_t i = 0; i < g_logits.size(); ++i) g_logits[i] = options.sup_weight * sup.grad[i];
  }

  const LossGrad contrast = contrastive_loss_grad(v.student.map, v.labels, v.local, cfg.tau);
  out.parts.contrast = contrast.value;
  if (cfg.lambda1 > 0.0) {
    for (std::size_t i = 0; i < g_embed.size(); ++i) g_embed[i] += cfg.lambda1 * contrast.grad[i];
  }

  if (bank != nullptr && !bank->empty() && cfg.lambda3 > 0.0) {
    // Queries are the student's per-class mean embeddings over the anchors.
    const KeySets keys = build_key_sets(v.student.map, v.labels, v.local);
    std::vector<Vec> queries;
    for (const auto& ck : keys.classes) queries.push_back(ck.positive_mean);
    const LossGrad nn = nn_loss_grad(queries, *bank, cfg.k_nn);
    out.parts.nn = nn.value;
    for (std::size_t c = 0; c < keys.classes.size(); ++c) {
      const auto& ck = keys.classes[c];
      const double share = cfg.lambda3 / static_cast<double>(ck.query_pixels.size());
      for (PixelIndex row : ck.query_pixels) {
        for (std::size_t e = 0; e < s.embed; ++e) g_embed[row * s.embed + e] += share * nn.grad[c * s.embed + e];
      }
    }
  }
  backward(student, image, v.student, g_logits, g_embed, out.grad);

  if (batch.unlabeled != nullptr && cfg.lambda2 > 0.0) {
    const auto st = forward_pass(student, *batch.unlabeled);
    const auto te = forward_pass(teacher, *batch.unlabeled);
    LossGrad u = unsup_loss_grad(st.map.logits, te.map.logits, s.classes);
    out.parts.unsup = u.value;
    for (double& g : u.grad) g *= cfg.lambda2;
    backward(student, *batch.unlabeled, st, u.grad, {}, out.grad);
  }

  LossParts weighted = out.parts;
  weighted.sup *= options.sup_weight;
  out.total = total_finetune_loss(weighted, cfg);
  return out;
}

LossEvaluation grad_total_loss(const ToyModel& student, const ToyModel& teacher, const Batch& batch,
                               const SampleSet& anchors, const ObjectiveOptions& options,
                               const MemoryBank* bank) {
  const auto flat = anchors.flatten();
  return grad_total_loss(student, teacher, batch, flat, options, bank);
}

std::vector<MemoryBank::Entry> teacher_bank_entries(const ToyModel& teacher, const Batch& batch,
                                                    std::span<const PixelIndex> anchors) {
  ContrastView v = contrast_view(teacher, teacher, batch, anchors, false);
  const KeySets keys = build_key_sets(v.student.map, v.labels, v.local);
  std::vector<MemoryBank::Entry> out;
  for (const auto& ck : keys.classes) out.push_back({ck.positive, ck.class_id});
  return out;
}

LossGrad pretrain_loss_grad(const ToyModel& student, const ToyModel& teacher,
                            const PixelLattice& image, const FineTuneConfig& config) {
  const std::size_t views = config.d_mined;
  if (image.size() < views) throw InvalidInput("image has fewer pixels than mined views");
  const auto st = forward_pass(student, image);
  const auto te = forward_pass(teacher, image);
  const std::size_t dim = student.shape().embed;
  const std::size_t n = image.size();

  Vec student_mean(dim, 0.0), teacher_mean(dim, 0.0);
  std::vector<Vec> mined(views, Vec(dim, 0.0));
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t band = p * views / n;
    for (std::size_t e = 0; e < dim; ++e) {
      student_mean[e] += st.map.raw[p * dim + e] / static_cast<double>(n);
      teacher_mean[e] += te.map.raw[p * dim + e] / static_cast<double>(n);
      mined[band][e] += te.map.raw[p * dim + e];
    }
  }
  LossGrad kl = instance_discrimination_loss_grad(student_mean, teacher_mean, mined, config.tau_s,
                                                  config.tau_t);
  std::vector<double> g_raw(n * dim);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t e = 0; e < dim; ++e) g_raw[p * dim + e] = kl.grad[e] / static_cast<double>(n);
  }
  LossGrad out;
  out.value = kl.value;
  out.grad.assign(student.shape().parameter_count(), 0.0);
  backward_raw(student, image, st, {}, g_raw, out.grad);
  return out;
}

// --- configuration -----------------------------------------------------------------

void ConvergenceConfig::validate() const {
  if (steps == 0) throw InvalidInput("T must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be > 0");
  if (rule == StepRule::kConstant && !(constant_rate > 0.0)) throw InvalidInput("constant rate must be > 0");
  if (l_hat < 0.0 || sigma_hat < 0.0) throw InvalidInput("L_hat and sigma_hat must be >= 0");
  if (smoothness_probes == 0) throw InvalidInput("need at least one smoothness probe");
  if (noise_draws < 2) throw InvalidInput("need at least two noise draws");
  if (checkpoints == 0) throw InvalidInput("need at least one checkpoint");
  if (!(threshold > 0.0)) throw InvalidInput("threshold must be > 0");
}

void TrainConfig::validate() const {
  if (hidden == 0 || embed == 0) throw InvalidInput("hidden and embed sizes must be positive");
  if (anchors == 0) throw InvalidInput("anchor count must be positive");
  if (!(init_gain > 0.0)) throw InvalidInput("init_gain must be > 0");
  if (eval_stride == 0) throw InvalidInput("eval_stride must be positive");
  if (!(pretrain_rate > 0.0)) throw InvalidInput("pretrain_rate must be > 0");
  objective.loss.validate();
  if (!(objective.sup_weight >= 0.0)) throw InvalidInput("sup_weight must be >= 0");
  schedule.validate();
}

namespace {

std::string to_string(StepRule r) { return r == StepRule::kConstant ? "constant" : "proposition"; }

StepRule parse_step_rule(const std::string& s) {
  if (s == "proposition") return StepRule::kProposition;
  if (s == "constant") return StepRule::kConstant;
  throw InvalidInput("unknown step rule '" + s + "'");
}

std::string to_string(EmptyStrata m) { return m == EmptyStrata::kExact ? "exact" : "guarantee_one"; }

EmptyStrata parse_empty_strata(const std::string& s) {
  if (s == "exact") return EmptyStrata::kExact;
  if (s == "guarantee_one") return EmptyStrata::kGuaranteeOne;
  throw InvalidInput("unknown empty_strata mode '" + s + "'");
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.hidden = j.value("hidden", c.hidden);
    c.embed = j.value("embed", c.embed);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.init_gain = j.value("init_gain", c.init_gain);
    if (j.contains("scheme")) c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    c.cell_shape = j.value("cell_shape", c.cell_shape);
    c.anchors = j.value("anchors", c.anchors);
    if (j.contains("empty_strata")) c.empty_strata = parse_empty_strata(j.at("empty_strata").get<std::string>());
    c.objective.sup_weight = j.value("sup_weight", c.objective.sup_weight);
    if (j.contains("loss")) c.objective.loss = finetune_config_from_json(j.at("loss").dump());
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      auto& d = c.schedule;
      d.steps = s.value("steps", d.steps);
      if (s.contains("rule")) d.rule = parse_step_rule(s.at("rule").get<std::string>());
      d.alpha = s.value("alpha", d.alpha);
      d.constant_rate = s.value("constant_rate", d.constant_rate);
      d.l_hat = s.value("l_hat", d.l_hat);
      d.sigma_hat = s.value("sigma_hat", d.sigma_hat);
      d.smoothness_probes = s.value("smoothness_probes", d.smoothness_probes);
      d.noise_draws = s.value("noise_draws", d.noise_draws);
      d.checkpoints = s.value("checkpoints", d.checkpoints);
      d.threshold = s.value("threshold", d.threshold);
    }
    c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
    c.pretrain_rate = j.value("pretrain_rate", c.pretrain_rate);
    c.eval_stride = j.value("eval_stride", c.eval_stride);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["hidden"] = c.hidden;
  j["embed"] = c.embed;
  j["init_seed"] = c.init_seed;
  j["init_gain"] = c.init_gain;
  j["scheme"] = to_string(c.scheme);
  j["cell_shape"] = c.cell_shape;
  j["anchors"] = c.anchors;
  j["empty_strata"] = to_string(c.empty_strata);
  j["sup_weight"] = c.objective.sup_weight;
  j["loss"] = nlohmann::ordered_json::parse(finetune_config_to_json(c.objective.loss));
  nlohmann::ordered_json s;
  s["steps"] = c.schedule.steps;
  s["rule"] = to_string(c.schedule.rule);
  s["alpha"] = c.schedule.alpha;
  s["constant_rate"] = c.schedule.constant_rate;
  s["l_hat"] = c.schedule.l_hat;
  s["sigma_hat"] = c.schedule.sigma_hat;
  s["smoothness_probes"] = c.schedule.smoothness_probes;
  s["noise_draws"] = c.schedule.noise_draws;
  s["checkpoints"] = c.schedule.checkpoints;
  s["threshold"] = c.schedule.threshold;
  j["schedule"] = s;
  j["pretrain_steps"] = c.pretrain_steps;
  j["pretrain_rate"] = c.pretrain_rate;
  j["eval_stride"] = c.eval_stride;
  return j.dump(2);
}

// --- training loop ---------------------------------------------------------------

ModelShape model_shape(const Batch& data, const TrainConfig& config) {
  const PixelLattice& image = data.contrast_image();
  ModelShape s;
  s.features = image.payload_dim();
  s.hidden = config.hidden;
  s.classes = static_cast<std::size_t>(image.num_classes());
  s.embed = config.embed;
  return s;
}

namespace {

struct SamplingPlan {
  Stratification strata;
  Allocation allocation;
};

SamplingPlan sampling_plan(const Batch& data, const TrainConfig& config) {
  const PixelLattice& image = data.contrast_image();
  Stratification strata = build_stratification(image, config.scheme, config.cell_shape);
  Allocation allocation = allocate_proportional(strata, config.anchors, config.empty_strata);
  return {std::move(strata), std::move(allocation)};
}

std::vector<PixelIndex> draw_anchors(Sampler sampler, const PixelLattice& image, const SamplingPlan& plan,
                                     std::uint64_t seed, std::uint64_t trial) {
  return sample(sampler, image, plan.strata, plan.allocation, seed, trial).flatten();
}

}  // namespace

StepSizeEstimate estimate_step_size(const ToyModel& model, const Batch& data, Sampler sampler,
                                    const TrainConfig& config) {
  config.validate();
  const ConvergenceConfig& sched = config.schedule;
  StepSizeEstimate est{sched.l_hat, sched.sigma_hat, sched.constant_rate};
  if (sched.rule == StepRule::kConstant) return est;

  const PixelLattice& image = data.contrast_image();
  const SamplingPlan plan = sampling_plan(data, config);
  const ObjectiveOptions& obj = config.objective;

  if (est.l_hat == 0.0) {
    const std::uint64_t seed = derive_seed(config.init_seed, kSmoothnessTag);
    const double radius = 1e-2 * (1.0 + std::sqrt(squared_norm(model.params())));
    for (std::size_t i = 0; i < sched.smoothness_probes; ++i) {
      const auto anchors = draw_anchors(Sampler::kNaive, image, plan, seed, i);
      const auto g0 = grad_total_loss(model, model, data, anchors, obj).grad;
      PhiloxStream dir(seed, 1, i);
      std::vector<double> step(g0.size());
      for (double& x : step) x = dir.normal();
      const double scale = radius / std::sqrt(squared_norm(step));
      ToyModel moved = model;
      for (std::size_t k = 0; k < step.size(); ++k) moved.mutable_params()[k] += scale * step[k];
      const auto g1 = grad_total_loss(moved, model, data, anchors, obj).grad;
      double diff = 0.0;
      for (std::size_t k = 0; k < g0.size(); ++k) diff += (g1[k] - g0[k]) * (g1[k] - g0[k]);
      est.l_hat = std::max(est.l_hat, std::sqrt(diff) / radius);
    }
    if (!(est.l_hat > 0.0)) est.l_hat = 1.0;
  }

  if (est.sigma_hat == 0.0) {
    const std::uint64_t seed = derive_seed(config.init_seed, kNoiseTag);
    std::vector<std::vector<double>> grads;
    for (std::size_t j = 0; j < sched.noise_draws; ++j) {
      const auto anchors = draw_anchors(sampler, image, plan, seed, j);
      grads.push_back(grad_total_loss(model, model, data, anchors, obj).grad);
    }
    std::vector<double> mean(grads.front().size(), 0.0);
    for (const auto& g : grads) {
      for (std::size_t k = 0; k < g.size(); ++k) mean[k] += g[k] / static_cast<double>(grads.size());
    }
    double ss = 0.0;
    for (const auto& g : grads) {
      for (std::size_t k = 0; k < g.size(); ++k) ss += (g[k] - mean[k]) * (g[k] - mean[k]);
    }
    est.sigma_hat = std::sqrt(ss / static_cast<double>(grads.size() - 1));
  }

  est.step_size = 1.0 / est.l_hat;
  if (est.sigma_hat > 0.0) {
    est.step_size = std::min(est.step_size, sched.alpha / (est.sigma_hat * std::sqrt(static_cast<double>(sched.steps))));
  }
  return est;
}

std::vector<PixelIndex> strided_anchors(const PixelLattice& image, std::size_t stride) {
  if (stride == 0) throw InvalidInput("stride must be positive");
  std::vector<PixelIndex> out;
  for (PixelIndex p = 0; p < image.size(); ++p) {
    const Coord c = image.coord(p);
    bool keep = true;
    for (std::size_t a = 0; a < image.rank(); ++a) keep = keep && (c[a] % static_cast<std::int64_t>(stride) == 0);
    if (keep) out.push_back(p);
  }
  return out;
}

double evaluate_contrast(const ToyModel& model, const PixelLattice& image, std::size_t stride,
                         double tau) {
  const auto anchors = strided_anchors(image, stride);
  const auto cache = forward_pass(model, image, anchors);
  std::vector<int> labels(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) labels[i] = image.class_at(anchors[i]);
  std::vector<PixelIndex> rows(anchors.size());
  std::iota(rows.begin(), rows.end(), PixelIndex{0});
  const double total = contrastive_loss(build_key_sets(cache.map, labels, rows), tau);
  return total / static_cast<double>(anchors.size());
}

TrajectoryLog sgd_train(const Batch& data, Sampler sampler, const TrainConfig& config,
                        std::uint64_t seed) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const PixelLattice& image = data.contrast_image();
  const ConvergenceConfig& sched = config.schedule;
  const FineTuneConfig& loss = config.objective.loss;

  TrajectoryLog log;
  log.seed = seed;
  log.sampler = sampler;

  ToyModel student = ToyModel::random(model_shape(data, config), config.init_seed, config.init_gain);
  ToyModel teacher = student;

  const PixelLattice& warmup_image = data.unlabeled != nullptr ? *data.unlabeled : image;
  for (std::size_t s = 0; s < config.pretrain_steps; ++s) {
    const LossGrad lg = pretrain_loss_grad(student, teacher, warmup_image, loss);
    log.pretrain_losses.push_back(lg.value);
    for (std::size_t k = 0; k < lg.grad.size(); ++k) student.mutable_params()[k] -= config.pretrain_rate * lg.grad[k];
    ema_update(teacher.mutable_params(), student.params(), loss.ema_momentum);
  }

  const StepSizeEstimate est = estimate_step_size(student, data, sampler, config);
  log.l_hat = est.l_hat;
  log.sigma_hat = est.sigma_hat;
  log.step_size = est.step_size;

  const SamplingPlan plan = sampling_plan(data, config);
  MemoryBank bank(loss.bank_capacity);
  const std::size_t window = std::max<std::size_t>(1, sched.steps / sched.checkpoints);
  double window_sum = 0.0;
  double epoch_contrast = 0.0;

  for (std::size_t t = 0; t < sched.steps; ++t) {
    const auto anchors = draw_anchors(sampler, image, plan, seed, t);
    const LossEvaluation ev = grad_total_loss(student, teacher, data, anchors, config.objective, &bank);
    StepRecord rec{t, ev.parts, ev.total, squared_norm(ev.grad)};
    log.steps.push_back(rec);
    if (!std::isfinite(ev.total) || !all_finite(ev.grad)) {
      log.diverged = true;
      log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingDiverged("non-finite loss at step " + std::to_string(t), log);
    }

    for (std::size_t k = 0; k < ev.grad.size(); ++k) student.mutable_params()[k] -= est.step_size * ev.grad[k];
    if (!all_finite(student.params())) {
      log.diverged = true;
      log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingDiverged("non-finite parameters after step " + std::to_string(t), log);
    }
    ema_update(teacher.mutable_params(), student.params(), loss.ema_momentum);
    if (loss.lambda3 > 0.0) bank.push(teacher_bank_entries(teacher, data, anchors));

    epoch_contrast += ev.parts.contrast / static_cast<double>(ev.queries);
    window_sum += rec.grad_sq_norm;
    if (t >= window) window_sum -= log.steps[t - window].grad_sq_norm;
    if (!log.steps_to_threshold && t + 1 >= window &&
        window_sum / static_cast<double>(window) <= sched.threshold * log.steps.front().grad_sq_norm) {
      log.steps_to_threshold = t + 1;
    }
    if ((t + 1) % window == 0) {
      log.checkpoints.push_back({t + 1, epoch_contrast / static_cast<double>(window),
                                 evaluate_contrast(student, image, config.eval_stride, loss.tau)});
      epoch_contrast = 0.0;
    }
  }
  log.final_params.assign(student.params().begin(), student.params().end());
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return log;
}

std::string trajectory_csv_header() {
  return "seed,step,loss_total,loss_contrast,loss_nn,loss_unsup,loss_sup,grad_sq_norm\n";
}

std::string trajectory_csv_rows(const TrajectoryLog& log) {
  std::string out;
  for (const auto& r : log.steps) {
    out += std::to_string(log.seed) + ',' + std::to_string(r.step) + ',' + format_double(r.total) + ',' +
           format_double(r.parts.contrast) + ',' + format_double(r.parts.nn) + ',' +
           format_double(r.parts.unsup) + ',' + format_double(r.parts.sup) + ',' +
           format_double(r.grad_sq_norm) + '\n';
  }
  return out;
}

std::vector<int> predict_labels(const RepresentationMap& map) {
  std::vector<int> out(map.pixels);
  for (std::size_t p = 0; p < map.pixels; ++p) out[p] = static_cast<int>(argmax(map.logit(p)));
  return out;
}

double dice(std::span<const int> predicted, std::span<const int> truth, int c) {
  if (predicted.size() != truth.size()) throw InvalidInput("masks differ in pixel count");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool in_a = predicted[i] == c, in_b = truth[i] == c;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

}  // namespace stratvr
