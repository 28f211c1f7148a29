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

#include "stratvr/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "stratvr/errors.hpp"
#include "stratvr/io.hpp"
#include "stratvr/rng.hpp"
#include "stratvr/summation.hpp"

namespace stratvr {

std::vector<double> tabulate(const PixelLattice& lattice, const PixelFunction& h) {
  std::vector<double> values(lattice.size());
  for (PixelIndex p = 0; p < lattice.size(); ++p) values[p] = h.eval(lattice, p);
  return values;
}

double aggregate_exact(std::span<const double> values) {
  if (values.empty()) throw InvalidInput("cannot aggregate over an empty lattice");
  return compensated_mean(values);
}

double aggregate_exact(const PixelLattice& lattice, const PixelFunction& h) {
  if (lattice.empty()) throw InvalidInput("cannot aggregate over an empty lattice");
  CompensatedSum sum;
  for (PixelIndex p = 0; p < lattice.size(); ++p) sum += h.eval(lattice, p);
  return sum.value() / static_cast<double>(lattice.size());
}

namespace {

double mean_at(std::span<const double> values, std::span<const PixelIndex> pixels) {
  CompensatedSum sum;
  for (PixelIndex p : pixels) sum += values[p];
  return sum.value() / static_cast<double>(pixels.size());
}

double stratum_exact_mean(std::span<const double> values, const Stratum& stratum) {
  return mean_at(values, stratum.pixels());
}

std::vector<const StratumSample*> index_by_stratum(const SampleSet& sample, std::size_t count) {
  std::vector<const StratumSample*> by_id(count, nullptr);
  for (const auto& s : sample.strata) {
    if (s.stratum < 0 || static_cast<std::size_t>(s.stratum) >= count) {
      throw InvalidInput("sample refers to stratum " + std::to_string(s.stratum) +
                         " outside the stratification");
    }
    if (by_id[static_cast<std::size_t>(s.stratum)] != nullptr) {
      throw InvalidInput("stratum listed twice in sample");
    }
    by_id[static_cast<std::size_t>(s.stratum)] = &s;
  }
  return by_id;
}

}  // namespace

double estimate_pooled(const SampleSet& sample, std::span<const double> values) {
  if (sample.total_size() == 0) throw InvalidInput("empty sample");
  CompensatedSum sum;
  for (const auto& s : sample.strata) {
    for (PixelIndex p : s.pixels) sum += values[p];
  }
  return sum.value() / static_cast<double>(sample.total_size());
}

double estimate(const SampleSet& sample, const Stratification& stratification,
                std::span<const double> values, EmptyStrata mode) {
  if (sample.total_size() == 0) throw InvalidInput("empty sample");
  if (sample.sampler == Sampler::kNaive) return estimate_pooled(sample, values);

  const auto by_id = index_by_stratum(sample, stratification.size());
  CompensatedSum total;
  for (std::size_t m = 0; m < stratification.size(); ++m) {
    const StratumSample* s = by_id[m];
    double mean = 0.0;
    if (s != nullptr && !s->pixels.empty()) {
      mean = mean_at(values, s->pixels);
    } else if (mode == EmptyStrata::kExact) {
      mean = stratum_exact_mean(values, stratification[m]);
    } else {
      throw InvalidInput("stratum " + std::to_string(m) + " has no draws");
    }
    total += stratification.weight(m) * mean;
  }
  return total.value();
}

double estimate(const SampleSet& sample, const Stratification& stratification,
                const PixelLattice& lattice, const PixelFunction& h, EmptyStrata mode) {
  return estimate(sample, stratification, tabulate(lattice, h), mode);
}

double estimate_equal_weight(const SampleSet& sample, std::span<const double> values) {
  if (sample.total_size() == 0) throw InvalidInput("empty sample");
  CompensatedSum total;
  std::size_t groups = 0;
  for (const auto& s : sample.strata) {
    if (s.pixels.empty()) throw InvalidInput("equal-weight form needs a draw in every stratum");
    total += mean_at(values, s.pixels);
    ++groups;
  }
  return total.value() / static_cast<double>(groups);
}

// ---------------------------------------------------------------------------

const SamplerSummary* VarianceReport::find(Sampler s) const {
  for (const auto& summary : samplers) {
    if (summary.sampler == s) return &summary;
  }
  return nullptr;
}

VarianceReport analytic_variance(std::span<const double> values,
                                 const Stratification& stratification,
                                 const Allocation& allocation, std::string function_name) {
  if (values.size() != stratification.population()) {
    throw InvalidInput("function table does not match the stratified population");
  }
  if (allocation.per_stratum.size() != stratification.size()) {
    throw InvalidInput("allocation length does not match stratification");
  }
  if (allocation.total == 0) throw InvalidInput("allocation total must be >= 1");

  VarianceReport r;
  r.function_name = std::move(function_name);
  r.n = allocation.total;
  r.exactly_proportional = is_exactly_proportional(stratification, allocation);
  r.snapped_reflections = stratification.snapped_count();

  r.population_mean = compensated_mean(values);
  r.h_true = r.population_mean;
  {
    CompensatedSum ss;
    for (double v : values) ss += (v - r.population_mean) * (v - r.population_mean);
    r.population_variance = ss.value() / static_cast<double>(values.size());
  }

  const auto n = static_cast<double>(allocation.total);
  CompensatedSum var_sg, var_sag, mean_sag, statement, gap_w, gap_u;
  r.per_stratum.reserve(stratification.size());
  for (std::size_t m = 0; m < stratification.size(); ++m) {
    const Stratum& stratum = stratification[m];
    const auto pixels = stratum.pixels();
    const auto size = static_cast<double>(pixels.size());
    StratumMoments sm;
    sm.size = pixels.size();
    sm.weight = stratification.weight(m);
    sm.draws = allocation.per_stratum[m];
    sm.exact_reflection = stratum.reflection_is_exact();

    CompensatedSum sum, rsum;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      sum += values[pixels[i]];
      rsum += values[pixels[stratum.reflected_position(i)]];
    }
    sm.mean = sum.value() / size;
    sm.reflected_mean = rsum.value() / size;
    CompensatedSum var, rvar, cov, pair;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const double d = values[pixels[i]] - sm.mean;
      const double rd = values[pixels[stratum.reflected_position(i)]] - sm.reflected_mean;
      var += d * d;
      rvar += rd * rd;
      cov += d * rd;
      pair += (d + rd) * (d + rd);
    }
    sm.variance = var.value() / size;
    sm.reflected_variance = rvar.value() / size;
    sm.covariance = cov.value() / size;
    sm.pair_variance = pair.value() / size;

    const double w2 = sm.weight * sm.weight;
    if (sm.draws > 0) {
      const auto nm = static_cast<double>(sm.draws);
      const auto pairs = static_cast<double>(sm.draws / 2);
      const auto unpaired = static_cast<double>(sm.draws % 2);
      var_sg += w2 * sm.variance / nm;
      var_sag += w2 * (pairs * sm.pair_variance + unpaired * sm.variance) / (nm * nm);
      mean_sag += sm.weight * (pairs * (sm.mean + sm.reflected_mean) + unpaired * sm.mean) / nm;
    } else {
      mean_sag += sm.weight * sm.mean;
    }
    statement += sm.variance * static_cast<double>(sm.draws) / n;
    const double dev = sm.mean - r.population_mean;
    gap_w += sm.weight * dev * dev / n;
    gap_u += dev * dev / n;
    r.per_stratum.push_back(sm);
  }

  r.var_ns = r.population_variance / n;
  r.var_sg = var_sg.value();
  r.var_sag = var_sag.value();
  r.mean_sag = mean_sag.value();
  r.var_sg_statement_form = statement.value();
  r.gap_weighted = gap_w.value();
  r.gap_unweighted = gap_u.value();
  r.samplers = {
      {Sampler::kNaive, r.h_true, r.var_ns, std::nullopt},
      {Sampler::kStratified, r.h_true, r.var_sg, std::nullopt},
      {Sampler::kAntithetic, r.mean_sag, r.var_sag, std::nullopt},
  };
  return r;
}

VarianceReport analytic_variance(const PixelLattice& lattice, const Stratification& stratification,
                                 const Allocation& allocation, const PixelFunction& h) {
  return analytic_variance(tabulate(lattice, h), stratification, allocation, h.name);
}

// ---------------------------------------------------------------------------

std::uint64_t sampler_seed(std::uint64_t seed, Sampler sampler) {
  return derive_seed(seed, 1 + static_cast<std::uint64_t>(sampler));
}

namespace {

// Mirrors estimate(sample_*(...)) term for term so the fast path and the
// public path agree bitwise.
double one_trial(Sampler sampler, const PixelLattice& lattice,
                 const Stratification& stratification, const Allocation& allocation,
                 std::span<const double> values, std::span<const double> exact_means,
                 std::uint64_t seed, std::uint64_t trial, std::vector<std::size_t>& scratch) {
  if (sampler == Sampler::kNaive) {
    PhiloxStream rng(seed, PhiloxStream::kPopulationStream, trial);
    CompensatedSum sum;
    for (std::size_t i = 0; i < allocation.total; ++i) sum += values[rng.uniform_index(lattice.size())];
    return sum.value() / static_cast<double>(allocation.total);
  }
  CompensatedSum total;
  for (std::size_t m = 0; m < stratification.size(); ++m) {
    const Stratum& stratum = stratification[m];
    const std::size_t count = allocation.per_stratum[m];
    double mean = 0.0;
    if (count == 0) {
      mean = exact_means[m];
    } else {
      if (sampler == Sampler::kStratified) {
        draw_sg_positions(stratum, count, seed, trial, scratch);
      } else {
        draw_sag_positions(stratum, count, seed, trial, scratch);
      }
      CompensatedSum sum;
      for (std::size_t pos : scratch) sum += values[stratum.pixels()[pos]];
      mean = sum.value() / static_cast<double>(count);
    }
    total += stratification.weight(m) * mean;
  }
  return total.value();
}

MonteCarloStats summarize(std::span<const double> estimates) {
  MonteCarloStats st;
  st.trials = estimates.size();
  st.mean = compensated_mean(estimates);
  CompensatedSum ss;
  for (double e : estimates) ss += (e - st.mean) * (e - st.mean);
  st.variance = estimates.size() > 1 ? ss.value() / static_cast<double>(estimates.size() - 1) : 0.0;
  return st;
}

}  // namespace

std::vector<double> monte_carlo_estimates(Sampler sampler, const PixelLattice& lattice,
                                          const Stratification& stratification,
                                          const Allocation& allocation,
                                          std::span<const double> values, std::size_t trials,
                                          std::uint64_t seed, std::size_t jobs) {
  if (allocation.per_stratum.size() != stratification.size()) {
    throw InvalidInput("allocation length does not match stratification");
  }
  if (sampler != Sampler::kNaive && allocation.empty_strata == EmptyStrata::kGuaranteeOne) {
    for (std::size_t nm : allocation.per_stratum) {
      if (nm == 0) throw InvalidInput("zero-draw stratum without exact-empty-strata mode");
    }
  }
  std::vector<double> exact_means(stratification.size());
  for (std::size_t m = 0; m < stratification.size(); ++m) {
    exact_means[m] = stratum_exact_mean(values, stratification[m]);
  }
  std::vector<double> out(trials);
  const std::uint64_t stream_seed = sampler_seed(seed, sampler);
  auto run_range = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> scratch;
    for (std::size_t t = begin; t < end; ++t) {
      out[t] = one_trial(sampler, lattice, stratification, allocation, values, exact_means,
                         stream_seed, t, scratch);
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(trials, 1));
  if (jobs == 1) {
    run_range(0, trials);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (trials + jobs - 1) / jobs;
    for (std::size_t j = 0; j < jobs; ++j) {
      const std::size_t begin = j * chunk;
      const std::size_t end = std::min(trials, begin + chunk);
      if (begin < end) workers.emplace_back(run_range, begin, end);
    }
  }
  return out;
}

VarianceReport monte_carlo_study(const PixelLattice& lattice, const Stratification& stratification,
                                 const PixelFunction& h, std::size_t n, std::size_t trials,
                                 std::uint64_t seed, const MonteCarloOptions& options) {
  if (trials < 2) throw InvalidInput("a Monte-Carlo study needs at least 2 trials");
  const auto values = tabulate(lattice, h);
  const Allocation allocation = allocate_proportional(stratification, n, options.empty_strata);
  VarianceReport report = analytic_variance(values, stratification, allocation, h.name);
  for (Sampler s : options.samplers) {
    const auto estimates = monte_carlo_estimates(s, lattice, stratification, allocation, values,
                                                 trials, seed, options.jobs);
    for (auto& summary : report.samplers) {
      if (summary.sampler == s) summary.monte_carlo = summarize(estimates);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::kPass: return "PASS";
    case CheckStatus::kFail: return "FAIL";
    case CheckStatus::kNotApplicable: return "N/A";
  }
  return "?";
}

double relative_difference(double a, double b) noexcept {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

TheoremCheck check_theorem_sg(const VarianceReport& report, const Allocation& allocation) {
  TheoremCheck c;
  c.gap_analytic = report.var_ns - report.var_sg;
  c.gap_formula = report.gap_weighted;
  c.gap_unweighted = report.gap_unweighted;

  bool proportional = allocation.per_stratum.size() == report.per_stratum.size() &&
                      allocation.total == report.n;
  std::size_t population = 0;
  for (const auto& sm : report.per_stratum) population += sm.size;
  for (std::size_t m = 0; proportional && m < report.per_stratum.size(); ++m) {
    proportional = static_cast<unsigned __int128>(allocation.per_stratum[m]) * population ==
                   static_cast<unsigned __int128>(allocation.total) * report.per_stratum[m].size;
  }
  if (!proportional) {
    c.status = CheckStatus::kNotApplicable;
    return c;
  }
  // The gap is a difference of two variances, so its rounding error scales
  // with var_ns rather than with the gap itself.
  const double scale = std::max({std::abs(report.var_ns), std::abs(report.var_sg),
                                 std::abs(c.gap_formula)});
  c.relative_error = scale == 0.0 ? 0.0 : std::abs(c.gap_analytic - c.gap_formula) / scale;
  const bool ordered = report.var_sg <= report.var_ns * (1.0 + kGapRelativeTolerance);
  c.status = (c.relative_error <= kGapRelativeTolerance && ordered) ? CheckStatus::kPass
                                                                    : CheckStatus::kFail;
  return c;
}

LemmaCheck check_lemma_sag(const VarianceReport& report) {
  LemmaCheck c;
  c.bound = 2.0 * report.var_sg;
  c.ratio = report.var_sg > 0.0 ? report.var_sag / report.var_sg : 0.0;
  c.status = report.var_sag <= c.bound + kLemmaAbsoluteSlack ? CheckStatus::kPass
                                                             : CheckStatus::kFail;
  return c;
}

TotalVarianceCheck check_total_variance(const VarianceReport& report, double tolerance) {
  TotalVarianceCheck c;
  c.direct = report.population_variance;
  CompensatedSum within, between;
  for (const auto& sm : report.per_stratum) {
    within += sm.weight * sm.variance;
    const double dev = sm.mean - report.population_mean;
    between += sm.weight * dev * dev;
  }
  c.decomposed = within.value() + between.value();
  c.relative_error = relative_difference(c.direct, c.decomposed);
  c.status = c.relative_error <= tolerance ? CheckStatus::kPass : CheckStatus::kFail;
  return c;
}

// ---------------------------------------------------------------------------

std::string report_to_json(const VarianceReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["function"] = report.function_name;
  j["H_true"] = report.h_true;
  j["n"] = report.n;
  j["exactly_proportional"] = report.exactly_proportional;
  j["snapped_reflections"] = report.snapped_reflections;
  j["population"] = {{"mu", report.population_mean}, {"sigma2", report.population_variance}};
  j["analytic"] = {{"var_ns", report.var_ns},
                   {"var_sg", report.var_sg},
                   {"var_sag", report.var_sag},
                   {"mean_sag", report.mean_sag},
                   {"var_sg_statement_form", report.var_sg_statement_form},
                   {"gap_weighted", report.gap_weighted},
                   {"gap_unweighted", report.gap_unweighted}};
  ordered_json mc = ordered_json::object();
  for (const auto& s : report.samplers) {
    if (!s.monte_carlo) continue;
    mc[to_string(s.sampler)] = {{"mean", s.monte_carlo->mean},
                                {"var", s.monte_carlo->variance},
                                {"trials", s.monte_carlo->trials}};
  }
  j["monte_carlo"] = std::move(mc);
  ordered_json strata = ordered_json::array();
  for (const auto& sm : report.per_stratum) {
    strata.push_back({{"size", sm.size},
                      {"w", sm.weight},
                      {"n_m", sm.draws},
                      {"mu_m", sm.mean},
                      {"sigma2_m", sm.variance},
                      {"cov_m", sm.covariance},
                      {"exact_reflection", sm.exact_reflection}});
  }
  j["per_stratum"] = std::move(strata);
  return j.dump(2) + "\n";
}

std::string report_to_csv(const VarianceReport& report) {
  std::string csv = "sampler,analytic_mean,analytic_var,mc_mean,mc_var,trials,H_true\n";
  for (const auto& s : report.samplers) {
    csv += to_string(s.sampler) + ',' + format_double(s.analytic_mean) + ',' +
           format_double(s.analytic_variance) + ',';
    if (s.monte_carlo) {
      csv += format_double(s.monte_carlo->mean) + ',' + format_double(s.monte_carlo->variance) +
             ',' + std::to_string(s.monte_carlo->trials);
    } else {
      csv += ",,0";
    }
    csv += ',' + format_double(report.h_true) + '\n';
  }
  return csv;
}

}  // namespace stratvr
