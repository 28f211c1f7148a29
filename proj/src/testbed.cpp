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

#include <cmath>
#include <numeric>

#include "stratvr/rng.hpp"
#include "stratvr/trainer.hpp"

namespace stratvr {

namespace {

// One noise stream per seed, shared across noise levels and horizons so that
// runs at different sigma see the same standard-normal draws.
constexpr std::uint32_t kGradientNoiseStream = 3;

double grad_sq(const std::vector<double>& curv, const std::vector<double>& theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) s += curv[i] * curv[i] * theta[i] * theta[i];
  return s;
}

void noisy_step(const std::vector<double>& curv, std::vector<double>& theta, double eta, double noise_scale,
                PhiloxStream& rng) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double xi = noise_scale * rng.normal();
    theta[i] -= eta * (curv[i] * theta[i] + xi);
  }
}

}  // namespace

void QuadraticTestbed::validate() const {
  if (dim == 0) throw InvalidInput("dim must be positive");
  if (!(min_curvature > 0.0 && min_curvature <= smoothness)) {
    throw InvalidInput("curvatures must satisfy 0 < min_curvature <= L");
  }
  if (!(alpha > 0.0)) throw InvalidInput("alpha must be > 0");
  if (!(threshold > 0.0)) throw InvalidInput("threshold must be > 0");
  if (horizon == 0) throw InvalidInput("horizon must be >= 1");
}

std::vector<double> QuadraticTestbed::curvatures() const {
  std::vector<double> c(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    c[i] = dim == 1 ? smoothness
                    : min_curvature + (smoothness - min_curvature) * static_cast<double>(i) /
                                          static_cast<double>(dim - 1);
  }
  return c;
}

double QuadraticTestbed::step_size(double sigma, std::size_t steps) const {
  const double base = 1.0 / smoothness;
  if (sigma <= 0.0) return base;
  return std::min(base, alpha / (sigma * std::sqrt(static_cast<double>(steps))));
}

DescentRun steps_to_threshold(const QuadraticTestbed& bed, double sigma, std::uint64_t seed) {
  bed.validate();
  if (!(sigma >= 0.0)) throw InvalidInput("sigma must be >= 0");
  const auto curv = bed.curvatures();
  std::vector<double> theta(bed.dim, 1.0);
  const double eta = bed.step_size(sigma, bed.horizon);
  const double noise_scale = sigma / std::sqrt(static_cast<double>(bed.dim));
  PhiloxStream rng(seed, kGradientNoiseStream);
  for (std::size_t t = 0; t < bed.horizon; ++t) {
    if (grad_sq(curv, theta) <= bed.threshold) return {t, false};
    noisy_step(curv, theta, eta, noise_scale, rng);
  }
  if (grad_sq(curv, theta) <= bed.threshold) return {bed.horizon, false};
  return {bed.horizon, true};
}

std::vector<NoiseLevelResult> noise_controlled_descent(const QuadraticTestbed& bed,
                                                       std::span<const double> sigmas,
                                                       std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw InvalidInput("need at least one seed");
  std::vector<NoiseLevelResult> out;
  for (double sigma : sigmas) {
    NoiseLevelResult r;
    r.sigma = sigma;
    r.step_size = bed.step_size(sigma, bed.horizon);
    for (std::uint64_t seed : seeds) {
      r.runs.push_back(steps_to_threshold(bed, sigma, seed));
      r.censored += r.runs.back().censored;
    }
    double sum = 0.0;
    for (const auto& run : r.runs) sum += static_cast<double>(run.steps);
    r.mean_steps = sum / static_cast<double>(r.runs.size());
    double ss = 0.0;
    for (const auto& run : r.runs) ss += (static_cast<double>(run.steps) - r.mean_steps) * (static_cast<double>(run.steps) - r.mean_steps);
    r.std_steps = r.runs.size() > 1 ? std::sqrt(ss / static_cast<double>(r.runs.size() - 1)) : 0.0;
    out.push_back(std::move(r));
  }
  return out;
}

double average_sq_grad(const QuadraticTestbed& bed, double sigma, std::size_t steps, std::uint64_t seed) {
  bed.validate();
  if (steps == 0) throw InvalidInput("steps must be >= 1");
  const auto curv = bed.curvatures();
  std::vector<double> theta(bed.dim, 1.0);
  const double eta = bed.step_size(sigma, steps);
  const double noise_scale = sigma / std::sqrt(static_cast<double>(bed.dim));
  PhiloxStream rng(seed, kGradientNoiseStream);
  double sum = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    sum += grad_sq(curv, theta);
    noisy_step(curv, theta, eta, noise_scale, rng);
  }
  return sum / static_cast<double>(steps);
}

RateFit fit_rate_constants(std::span<const std::size_t> horizons, std::span<const double> values) {
  if (horizons.size() != values.size() || horizons.size() < 2) {
    throw InvalidInput("need at least two (T, value) pairs");
  }
  // Normal equations for the basis (1 / T, 1 / sqrt(T)).
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    const double x1 = 1.0 / static_cast<double>(horizons[i]);
    const double x2 = 1.0 / std::sqrt(static_cast<double>(horizons[i]));
    a11 += x1 * x1;
    a12 += x1 * x2;
    a22 += x2 * x2;
    b1 += x1 * values[i];
    b2 += x2 * values[i];
  }
  const double det = a11 * a22 - a12 * a12;
  if (!(std::abs(det) > 0.0)) throw InvalidInput("horizons must be distinct");
  return {(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det};
}

double sign_test_p_value(std::size_t k, std::size_t n) {
  if (k > n) throw InvalidInput("k exceeds n");
  // Sum of C(n, i) / 2^n for i >= k, in log space to stay finite for large n.
  double p = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                         std::lgamma(static_cast<double>(n - i) + 1);
    p += std::exp(log_c - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(p, 1.0);
}

RateTrend rate_trend(const QuadraticTestbed& bed, std::span<const double> sigmas,
                     std::span<const std::size_t> horizons, std::span<const std::uint64_t> seeds) {
  if (sigmas.size() < 2) throw InvalidInput("need at least two noise levels");
  RateTrend out;
  out.sigmas.assign(sigmas.begin(), sigmas.end());
  out.horizons.assign(horizons.begin(), horizons.end());
  const double sigma_mean = std::accumulate(sigmas.begin(), sigmas.end(), 0.0) / static_cast<double>(sigmas.size());
  for (std::uint64_t seed : seeds) {
    std::vector<RateFit> fits;
    for (double sigma : sigmas) {
      std::vector<double> values;
      for (std::size_t T : horizons) values.push_back(average_sq_grad(bed, sigma, T, seed));
      fits.push_back(fit_rate_constants(horizons, values));
    }
    double sxy = 0.0, sxx = 0.0, c2_mean = 0.0;
    for (const auto& f : fits) c2_mean += f.c2 / static_cast<double>(fits.size());
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      sxy += (sigmas[i] - sigma_mean) * (fits[i].c2 - c2_mean);
      sxx += (sigmas[i] - sigma_mean) * (sigmas[i] - sigma_mean);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    out.slopes.push_back(slope);
    out.positive += slope > 0.0;
    out.fits.push_back(std::move(fits));
  }
  out.p_value = sign_test_p_value(out.positive, seeds.size());
  return out;
}

}  // namespace stratvr
