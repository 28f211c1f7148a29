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

#include "stratvr/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "stratvr/errors.hpp"

namespace stratvr {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double log_sum_exp(std::span<const double> x) {
  const double hi = *std::max_element(x.begin(), x.end());
  if (std::isinf(hi)) return hi;
  double s = 0.0;
  for (double v : x) s += std::exp(v - hi);
  return hi + std::log(s);
}

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput(std::string(what) + " must be > 0");
}

Vec normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (n < kNormFloor) throw InvalidInput("zero-norm embedding");
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// Division by max(|v|, floor), matching the representation map rows.
Vec floored(std::span<const double> v) {
  const double n = std::max(l2_norm(v), kNormFloor);
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

// Gradient of cos(w, v) with respect to w: (v_hat - cos * w_hat) / |w|.
void cosine_grad(std::span<const double> w_hat, double w_norm, std::span<const double> v_hat,
                 double cosine, double scale, std::span<double> out) {
  for (std::size_t i = 0; i < w_hat.size(); ++i) {
    out[i] += scale * (v_hat[i] - cosine * w_hat[i]) / w_norm;
  }
}

}  // namespace

RepresentationMap RepresentationMap::from_raw(std::vector<double> raw, std::size_t dim,
                                              std::vector<double> logits, std::size_t classes,
                                              Source source) {
  if (dim == 0 || raw.size() % dim != 0) throw InvalidInput("embedding size mismatch");
  RepresentationMap m;
  m.dim = dim;
  m.classes = classes;
  m.pixels = raw.size() / dim;
  if (logits.size() != m.pixels * classes) throw InvalidInput("logit size mismatch");
  m.raw = std::move(raw);
  m.logits = std::move(logits);
  m.source = source;
  m.embeddings.resize(m.raw.size());
  m.norms.resize(m.pixels);
  for (std::size_t p = 0; p < m.pixels; ++p) {
    const auto row = std::span<const double>(m.raw).subspan(p * dim, dim);
    const double n = l2_norm(row);
    m.norms[p] = n;
    const double denom = std::max(n, kNormFloor);
    for (std::size_t i = 0; i < dim; ++i) m.embeddings[p * dim + i] = row[i] / denom;
  }
  return m;
}

void normalize_backward(std::span<const double> raw, double norm, std::span<const double> grad_normalized,
                        std::span<double> grad_raw) {
  if (norm < kNormFloor) {
    for (std::size_t i = 0; i < raw.size(); ++i) grad_raw[i] += grad_normalized[i] / kNormFloor;
    return;
  }
  // d(z/|z|)/dz = (I - r r^T) / |z|
  double proj = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) proj += raw[i] * grad_normalized[i];
  proj /= norm;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    grad_raw[i] += (grad_normalized[i] - proj * raw[i] / norm) / norm;
  }
}

// --- pixel contrastive loss ---------------------------------------------------

KeySets build_key_sets(const RepresentationMap& map, std::span<const int> labels,
                       std::span<const PixelIndex> anchors) {
  if (anchors.empty()) throw InvalidInput("anchor set is empty");
  if (labels.size() != map.pixels) throw InvalidInput("label count does not match the map");
  std::vector<PixelIndex> sorted(anchors.begin(), anchors.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.back() >= map.pixels) throw InvalidInput("anchor outside the map");

  std::vector<int> present;
  for (PixelIndex p : sorted) present.push_back(labels[p]);
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());

  KeySets keys;
  for (int c : present) {
    ClassKeys ck;
    ck.class_id = c;
    for (PixelIndex p : sorted) {
      const auto e = map.embedding(p);
      if (labels[p] == c) {
        ck.queries.emplace_back(e.begin(), e.end());
        ck.query_pixels.push_back(p);
      } else {
        ck.negatives.emplace_back(e.begin(), e.end());
        ck.negative_pixels.push_back(p);
      }
    }
    ck.positive_mean.assign(map.dim, 0.0);
    for (const Vec& q : ck.queries) axpy(1.0, q, ck.positive_mean);
    for (double& x : ck.positive_mean) x /= static_cast<double>(ck.queries.size());
    ck.positive = floored(ck.positive_mean);
    keys.classes.push_back(std::move(ck));
  }
  return keys;
}

KeySets build_key_sets(const RepresentationMap& map, std::span<const int> labels,
                       const SampleSet& anchors) {
  const auto flat = anchors.flatten();
  return build_key_sets(map, labels, flat);
}

namespace {

// Per-query loss terms and softmax weights for one class.
struct QueryTerms {
  double loss = 0.0;
  double pi_positive = 0.0;
  std::vector<double> pi_negative;
};

QueryTerms query_terms(std::span<const double> q, const ClassKeys& ck, double tau,
                       std::vector<double>& logits) {
  logits.resize(ck.negatives.size() + 1);
  logits[0] = dot(q, ck.positive) / tau;
  for (std::size_t j = 0; j < ck.negatives.size(); ++j) logits[j + 1] = dot(q, ck.negatives[j]) / tau;
  const double lse = log_sum_exp(logits);
  QueryTerms t;
  t.loss = lse - logits[0];
  t.pi_positive = std::exp(logits[0] - lse);
  t.pi_negative.resize(ck.negatives.size());
  for (std::size_t j = 0; j < ck.negatives.size(); ++j) t.pi_negative[j] = std::exp(logits[j + 1] - lse);
  return t;
}

}  // namespace

double contrastive_loss(const KeySets& keys, double tau) {
  require_positive(tau, "temperature");
  bool any = false;
  double total = 0.0;
  std::vector<double> scratch;
  for (const auto& ck : keys.classes) {
    for (const Vec& q : ck.queries) {
      any = true;
      total += query_terms(q, ck, tau, scratch).loss;
    }
  }
  if (!any) throw InvalidInput("no queries in any class");
  return total;
}

LossGrad contrastive_loss_grad(const RepresentationMap& map, std::span<const int> labels,
                               std::span<const PixelIndex> anchors, double tau) {
  require_positive(tau, "temperature");
  const KeySets keys = build_key_sets(map, labels, anchors);
  const std::size_t dim = map.dim;
  LossGrad out;
  out.grad.assign(map.pixels * dim, 0.0);
  std::vector<double> scratch;
  Vec grad_key(dim);
  for (const auto& ck : keys.classes) {
    std::fill(grad_key.begin(), grad_key.end(), 0.0);
    for (std::size_t i = 0; i < ck.queries.size(); ++i) {
      const Vec& q = ck.queries[i];
      const QueryTerms t = query_terms(q, ck, tau, scratch);
      out.value += t.loss;
      auto gq = std::span<double>(out.grad).subspan(ck.query_pixels[i] * dim, dim);
      axpy((t.pi_positive - 1.0) / tau, ck.positive, gq);
      axpy((t.pi_positive - 1.0) / tau, q, grad_key);
      for (std::size_t j = 0; j < ck.negatives.size(); ++j) {
        axpy(t.pi_negative[j] / tau, ck.negatives[j], gq);
        auto gn = std::span<double>(out.grad).subspan(ck.negative_pixels[j] * dim, dim);
        axpy(t.pi_negative[j] / tau, q, gn);
      }
    }
    // Positive key = mean / |mean|; route its gradient back to each query.
    const double mean_norm = l2_norm(ck.positive_mean);
    const double along = dot(ck.positive, grad_key);
    Vec grad_mean(dim);
    for (std::size_t i = 0; i < dim; ++i) grad_mean[i] = (grad_key[i] - along * ck.positive[i]) / mean_norm;
    const double share = 1.0 / static_cast<double>(ck.queries.size());
    for (PixelIndex p : ck.query_pixels) {
      axpy(share, grad_mean, std::span<double>(out.grad).subspan(p * dim, dim));
    }
  }
  return out;
}

// --- instance discrimination ----------------------------------------------------

namespace {

struct InstanceTerms {
  double kl = 0.0;
  Vec student_hat;
  double student_norm = 0.0;
  std::vector<Vec> mined_hat;
  std::vector<double> cosines;
  std::vector<double> p_s;
  std::vector<double> log_p_s;
  std::vector<double> log_p_t;
};

InstanceTerms instance_terms(std::span<const double> student, std::span<const double> teacher,
                             std::span<const Vec> mined, double tau_s, double tau_t) {
  require_positive(tau_s, "student temperature");
  require_positive(tau_t, "teacher temperature");
  if (mined.empty()) throw InvalidInput("need at least one mined view");
  InstanceTerms t;
  t.student_norm = l2_norm(student);
  t.student_hat = normalized(student);
  const Vec teacher_hat = normalized(teacher);
  const std::size_t n = mined.size();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mined[i].size() != student.size() || teacher.size() != student.size()) {
      throw InvalidInput("embedding dimensions differ");
    }
    t.mined_hat.push_back(normalized(mined[i]));
    t.cosines.push_back(dot(t.student_hat, t.mined_hat[i]));
    a[i] = t.cosines[i] / tau_s;
    b[i] = dot(teacher_hat, t.mined_hat[i]) / tau_t;
  }
  const double lse_a = log_sum_exp(a);
  const double lse_b = log_sum_exp(b);
  for (std::size_t i = 0; i < n; ++i) {
    t.log_p_s.push_back(a[i] - lse_a);
    t.log_p_t.push_back(b[i] - lse_b);
    t.p_s.push_back(std::exp(t.log_p_s[i]));
    t.kl += t.p_s[i] * (t.log_p_s[i] - t.log_p_t[i]);
  }
  t.kl = std::max(t.kl, 0.0);
  return t;
}

}  // namespace

double instance_discrimination_loss(std::span<const double> student, std::span<const double> teacher,
                                    std::span<const Vec> mined, double tau_s, double tau_t) {
  return instance_terms(student, teacher, mined, tau_s, tau_t).kl;
}

LossGrad instance_discrimination_loss_grad(std::span<const double> student,
                                           std::span<const double> teacher,
                                           std::span<const Vec> mined, double tau_s, double tau_t) {
  const InstanceTerms t = instance_terms(student, teacher, mined, tau_s, tau_t);
  LossGrad out;
  out.value = t.kl;
  out.grad.assign(student.size(), 0.0);
  // Unclamped KL for the softmax derivative p_i (log p_i - log q_i - KL).
  double kl = 0.0;
  for (std::size_t i = 0; i < t.p_s.size(); ++i) kl += t.p_s[i] * (t.log_p_s[i] - t.log_p_t[i]);
  for (std::size_t i = 0; i < t.p_s.size(); ++i) {
    const double d_logit = t.p_s[i] * (t.log_p_s[i] - t.log_p_t[i] - kl);
    cosine_grad(t.student_hat, t.student_norm, t.mined_hat[i], t.cosines[i], d_logit / tau_s,
                out.grad);
  }
  return out;
}

// --- memory bank / nearest neighbours -------------------------------------------

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw InvalidInput("memory bank capacity must be positive");
}

void MemoryBank::push(Entry item) {
  entries_.push_back(std::move(item));
  while (entries_.size() > capacity_) entries_.pop_front();
}

void MemoryBank::push(std::span<const Entry> items) {
  for (const auto& e : items) push(e);
}

LossGrad nn_loss_grad(std::span<const Vec> queries, const MemoryBank& bank, std::size_t k) {
  if (bank.empty()) throw InvalidInput("memory bank is empty");
  if (queries.empty()) throw InvalidInput("no queries");
  if (k == 0) throw InvalidInput("K must be positive");
  const std::size_t k_eff = std::min(k, bank.size());
  std::vector<Vec> bank_hat;
  for (const auto& e : bank.entries()) bank_hat.push_back(floored(e.embedding));

  const std::size_t dim = queries.front().size();
  const double scale = -1.0 / static_cast<double>(queries.size() * k_eff);
  LossGrad out;
  out.grad.assign(queries.size() * dim, 0.0);
  std::vector<double> cosines(bank_hat.size());
  std::vector<std::size_t> order(bank_hat.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    if (queries[qi].size() != dim || bank_hat.front().size() != dim) {
      throw InvalidInput("embedding dimensions differ");
    }
    const double q_norm = std::max(l2_norm(queries[qi]), kNormFloor);
    const Vec q_hat = floored(queries[qi]);
    for (std::size_t j = 0; j < bank_hat.size(); ++j) cosines[j] = dot(q_hat, bank_hat[j]);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cosines[a] > cosines[b]; });
    auto g = std::span<double>(out.grad).subspan(qi * dim, dim);
    for (std::size_t r = 0; r < k_eff; ++r) {
      const std::size_t j = order[r];
      out.value += scale * cosines[j];
      cosine_grad(q_hat, q_norm, bank_hat[j], cosines[j], scale, g);
    }
  }
  return out;
}

double nn_loss(std::span<const Vec> queries, const MemoryBank& bank, std::size_t k) {
  return nn_loss_grad(queries, bank, k).value;
}

std::vector<double>& ema_update(std::vector<double>& teacher, std::span<const double> student,
                                double momentum) {
  if (teacher.size() != student.size()) throw InvalidInput("parameter vectors differ in length");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("EMA momentum must lie in [0, 1)");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    teacher[i] = momentum * teacher[i] + (1.0 - momentum) * student[i];
  }
  return teacher;
}

// --- segmentation losses ----------------------------------------------------------

namespace {

void softmax_row(std::span<const double> logits, std::span<double> out) {
  const double lse = log_sum_exp(logits);
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] = std::exp(logits[c] - lse);
}

std::size_t argmax(std::span<const double> x) {
  return static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
}

}  // namespace

LossGrad unsup_loss_grad(std::span<const double> student_logits,
                         std::span<const double> teacher_logits, std::size_t classes) {
  if (classes == 0 || student_logits.size() != teacher_logits.size() ||
      student_logits.size() % classes != 0) {
    throw InvalidInput("student and teacher logits must have the same shape");
  }
  const std::size_t pixels = student_logits.size() / classes;
  if (pixels == 0) throw InvalidInput("no pixels");
  LossGrad out;
  out.grad.assign(student_logits.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const auto s = student_logits.subspan(p * classes, classes);
    const std::size_t y = argmax(teacher_logits.subspan(p * classes, classes));
    out.value += (log_sum_exp(s) - s[y]) * inv;
    auto g = std::span<double>(out.grad).subspan(p * classes, classes);
    softmax_row(s, g);
    for (double& v : g) v *= inv;
    g[y] -= inv;
  }
  return out;
}

double unsup_loss(std::span<const double> student_logits, std::span<const double> teacher_logits,
                  std::size_t classes) {
  return unsup_loss_grad(student_logits, teacher_logits, classes).value;
}

SupLoss sup_loss_grad(std::span<const double> logits, std::span<const int> labels,
                      std::size_t classes) {
  if (classes == 0 || logits.size() != labels.size() * classes) {
    throw InvalidInput("logits and labels differ in pixel count");
  }
  const std::size_t pixels = labels.size();
  if (pixels == 0) throw InvalidInput("no pixels");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw InvalidInput("label out of range");
  }
  std::vector<double> prob(logits.size());
  for (std::size_t p = 0; p < pixels; ++p) {
    softmax_row(logits.subspan(p * classes, classes),
                std::span<double>(prob).subspan(p * classes, classes));
  }

  SupLoss out;
  out.grad.assign(logits.size(), 0.0);
  const double inv_p = 1.0 / static_cast<double>(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const auto z = logits.subspan(p * classes, classes);
    const auto y = static_cast<std::size_t>(labels[p]);
    out.cross_entropy += (log_sum_exp(z) - z[y]) * inv_p;
  }

  // Soft Dice per class, then d(dice)/d(prob).
  std::vector<double> inter(classes, 0.0), denom(classes, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double onehot = static_cast<std::size_t>(labels[p]) == c ? 1.0 : 0.0;
      inter[c] += prob[p * classes + c] * onehot;
      denom[c] += prob[p * classes + c] + onehot;
    }
  }
  const double inv_k = 1.0 / static_cast<double>(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    out.dice += (1.0 - (2.0 * inter[c] + kDiceSmoothing) / (denom[c] + kDiceSmoothing)) * inv_k;
  }
  out.value = 0.5 * out.dice + 0.5 * out.cross_entropy;

  std::vector<double> g_prob(classes);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double onehot = static_cast<std::size_t>(labels[p]) == c ? 1.0 : 0.0;
      const double s = denom[c] + kDiceSmoothing;
      g_prob[c] = -0.5 * inv_k * (2.0 * onehot * s - (2.0 * inter[c] + kDiceSmoothing)) / (s * s);
    }
    const auto pr = std::span<const double>(prob).subspan(p * classes, classes);
    double weighted = 0.0;
    for (std::size_t c = 0; c < classes; ++c) weighted += g_prob[c] * pr[c];
    auto g = std::span<double>(out.grad).subspan(p * classes, classes);
    for (std::size_t j = 0; j < classes; ++j) {
      const double onehot = static_cast<std::size_t>(labels[p]) == j ? 1.0 : 0.0;
      g[j] = pr[j] * (g_prob[j] - weighted) + 0.5 * inv_p * (pr[j] - onehot);
    }
  }
  return out;
}

double sup_loss(std::span<const double> logits, std::span<const int> labels, std::size_t classes) {
  return sup_loss_grad(logits, labels, classes).value;
}

// --- configuration ------------------------------------------------------------------

void FineTuneConfig::validate() const {
  require_positive(tau, "tau");
  require_positive(tau_s, "tau_s");
  require_positive(tau_t, "tau_t");
  for (double l : {lambda1, lambda2, lambda3}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidInput("loss weights must be finite and >= 0");
  }
  if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) {
    throw InvalidInput("ema_momentum must lie in [0, 1)");
  }
  if (k_nn == 0) throw InvalidInput("K_nn must be positive");
  if (d_mined == 0) throw InvalidInput("d_mined must be positive");
  if (bank_capacity == 0) throw InvalidInput("bank capacity must be positive");
}

FineTuneConfig finetune_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed config: ") + e.what());
  }
  FineTuneConfig c;
  try {
    c.tau = j.value("tau", c.tau);
    c.tau_s = j.value("tau_s", c.tau_s);
    c.tau_t = j.value("tau_t", c.tau_t);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.lambda3 = j.value("lambda3", c.lambda3);
    c.ema_momentum = j.value("ema_momentum", c.ema_momentum);
    c.k_nn = j.value("K_nn", c.k_nn);
    c.d_mined = j.value("d_mined", c.d_mined);
    c.bank_capacity = j.value("bank_capacity", c.bank_capacity);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("bad config field: ") + e.what());
  }
  c.validate();
  return c;
}

std::string finetune_config_to_json(const FineTuneConfig& c) {
  nlohmann::ordered_json j;
  j["tau"] = c.tau;
  j["tau_s"] = c.tau_s;
  j["tau_t"] = c.tau_t;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda3"] = c.lambda3;
  j["ema_momentum"] = c.ema_momentum;
  j["K_nn"] = c.k_nn;
  j["d_mined"] = c.d_mined;
  j["bank_capacity"] = c.bank_capacity;
  return j.dump(2);
}

double total_finetune_loss(const LossParts& parts, const FineTuneConfig& config) {
  for (double v : {parts.sup, parts.contrast, parts.unsup, parts.nn}) {
    if (!std::isfinite(v)) throw InvalidInput("loss part is not finite");
  }
  return parts.sup + config.lambda1 * parts.contrast + config.lambda2 * parts.unsup +
         config.lambda3 * parts.nn;
}

std::string loss_parts_to_json_line(std::size_t step, const LossParts& parts, double total) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss_total"] = total;
  j["loss_sup"] = parts.sup;
  j["loss_contrast"] = parts.contrast;
  j["loss_unsup"] = parts.unsup;
  j["loss_nn"] = parts.nn;
  return j.dump();
}

}  // namespace stratvr
