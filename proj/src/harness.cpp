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

#include "stratvr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "stratvr/errors.hpp"
#include "stratvr/io.hpp"

namespace stratvr {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Runs task(i) for i in [0, count) on up to `jobs` threads. Each task writes
// only its own result slot, so the outcome does not depend on `jobs`.
template <class Task>
void parallel_tasks(std::size_t count, std::size_t jobs, Task&& task) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> workers;
    for (std::size_t j = 0; j < jobs; ++j) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

std::string fmt(double x) { return format_double(x); }

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed ") + what + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

LatticeSource source_from_json(const json& j, const fs::path& base) {
  LatticeSource s;
  if (j.contains("file")) s.file = resolve(base, j.at("file").get<std::string>());
  if (j.contains("synthetic")) s.synthetic = synthetic_spec_from_json(j.at("synthetic").dump());
  if (s.file.empty() == !s.synthetic.has_value()) {
    throw InvalidInput("a lattice source needs exactly one of 'file' or 'synthetic'");
  }
  return s;
}

ordered_json source_to_json(const LatticeSource& s) {
  ordered_json j;
  if (s.synthetic) {
    j["synthetic"] = ordered_json::parse(synthetic_spec_to_json(*s.synthetic));
  } else {
    j["file"] = s.file.generic_string();
  }
  return j;
}

std::vector<Sampler> samplers_from_json(const json& j) {
  std::vector<Sampler> out;
  for (const auto& s : j) out.push_back(parse_sampler(s.get<std::string>()));
  if (out.empty()) throw InvalidInput("no samplers selected");
  return out;
}

ordered_json samplers_to_json(const std::vector<Sampler>& samplers) {
  ordered_json j = ordered_json::array();
  for (Sampler s : samplers) j.push_back(to_string(s));
  return j;
}

std::vector<std::uint64_t> seeds_from_json(const json& j, const char* list_key, const char* count_key,
                                           std::vector<std::uint64_t> fallback) {
  if (j.contains(list_key)) return j.at(list_key).get<std::vector<std::uint64_t>>();
  if (j.contains(count_key)) {
    const auto count = j.at(count_key).get<std::size_t>();
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = i;
    return seeds;
  }
  return fallback;
}

EmptyStrata parse_empty(const std::string& s) {
  if (s == "exact") return EmptyStrata::kExact;
  if (s == "guarantee_one") return EmptyStrata::kGuaranteeOne;
  throw InvalidInput("unknown empty_strata mode '" + s + "'");
}

std::string empty_name(EmptyStrata m) { return m == EmptyStrata::kExact ? "exact" : "guarantee_one"; }

CheckStatus status_of(bool ok) { return ok ? CheckStatus::kPass : CheckStatus::kFail; }

CheckStatus parse_status(const std::string& s) {
  if (s == "PASS") return CheckStatus::kPass;
  if (s == "FAIL") return CheckStatus::kFail;
  if (s == "N/A") return CheckStatus::kNotApplicable;
  throw InvalidInput("unknown check status '" + s + "'");
}

void write_checks(const CheckList& checks, const fs::path& out_dir) {
  write_file_atomic(out_dir / "checks.json", checks_to_json(checks));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

}  // namespace

// --- inputs ---------------------------------------------------------------------

PixelLattice LatticeSource::load() const {
  if (synthetic) return generate_synthetic(*synthetic);
  return load_lattice(file);
}

PixelFunction make_pixel_function(const FunctionSpec& spec, const PixelLattice& lattice,
                                  const Stratification& stratification) {
  if (spec.kind == "payload") {
    if (spec.column >= lattice.payload_dim()) throw InvalidInput("payload column out of range");
    const std::size_t col = spec.column;
    return {[col](const PixelLattice& l, PixelIndex p) { return l.payload_at(p)[col]; },
            "payload_" + std::to_string(col)};
  }
  if (spec.kind == "class_indicator") {
    const int c = spec.class_id;
    return {[c](const PixelLattice& l, PixelIndex p) { return l.class_at(p) == c ? 1.0 : 0.0; },
            "class_indicator_" + std::to_string(c)};
  }
  if (spec.kind == "linear") {
    if (spec.weights.size() < lattice.rank()) throw InvalidInput("linear needs one weight per axis");
    const auto w = spec.weights;
    return {[w](const PixelLattice& l, PixelIndex p) {
              const Coord c = l.coord(p);
              double s = 0.0;
              for (std::size_t a = 0; a < l.rank(); ++a) s += w[a] * static_cast<double>(c[a]);
              return s;
            },
            "linear"};
  }
  if (spec.kind == "center_distance") {
    std::vector<double> table(lattice.size(), 0.0);
    for (const Stratum& st : stratification.strata()) {
      for (PixelIndex p : st.pixels()) {
        const Coord c = lattice.coord(p);
        double d = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
          const double diff = static_cast<double>(c[a]) - st.center()[a];
          d += diff * diff;
        }
        table[p] = d;
      }
    }
    return {[table = std::move(table)](const PixelLattice&, PixelIndex p) { return table[p]; },
            "center_distance"};
  }
  if (spec.kind == "values") {
    if (spec.values.size() != lattice.size()) throw InvalidInput("values table size differs from lattice");
    const auto v = spec.values;
    return {[v](const PixelLattice&, PixelIndex p) { return v[p]; }, "values"};
  }
  throw InvalidInput("unknown function kind '" + spec.kind + "'");
}

// --- checks ---------------------------------------------------------------------

bool CheckList::any_failed() const {
  return std::any_of(checks.begin(), checks.end(),
                     [](const CheckRecord& c) { return c.status == CheckStatus::kFail; });
}

void CheckList::add(std::string name, CheckStatus status, std::string detail) {
  checks.push_back({std::move(name), status, std::move(detail)});
}

std::string checks_to_json(const CheckList& list) {
  ordered_json j;
  j["command"] = list.command;
  ordered_json arr = ordered_json::array();
  for (const auto& c : list.checks) {
    arr.push_back({{"name", c.name}, {"status", to_string(c.status)}, {"detail", c.detail}});
  }
  j["checks"] = std::move(arr);
  j["plots"] = list.plots;
  return j.dump(2) + "\n";
}

CheckList checks_from_json(const std::string& text) {
  const json j = parse_json(text, "checks file");
  CheckList list;
  try {
    list.command = j.value("command", std::string{});
    for (const auto& c : j.at("checks")) {
      list.add(c.at("name").get<std::string>(), parse_status(c.at("status").get<std::string>()),
               c.value("detail", std::string{}));
    }
    list.plots = j.value("plots", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed checks file: ") + e.what());
  }
  return list;
}

// --- gen-data ---------------------------------------------------------------------

GenDataOutcome run_gen_data(const SyntheticSpec& spec) {
  GenDataOutcome out;
  out.lattice = generate_synthetic(spec);
  out.checks.command = "gen-data";
  for (int c = 0; c < spec.num_classes; ++c) out.fractions.push_back(class_fraction(out.lattice, c));
  if (spec.num_classes == 1) {
    out.checks.add("smallest_class_fraction", CheckStatus::kNotApplicable, "single class");
  } else {
    const double target = spec.smallest_fraction;
    const double got = out.fractions.back();
    const bool ok = std::abs(got - target) <= 0.2 * target;
    out.checks.add("smallest_class_fraction", status_of(ok),
                   "measured " + fmt(got) + ", requested " + fmt(target) + " (+-20% relative)");
  }
  return out;
}

void write_gen_data_outputs(const GenDataOutcome& outcome, const SyntheticSpec& spec,
                            const fs::path& out_dir) {
  ensure_dir(out_dir);
  save_lattice(outcome.lattice, out_dir / "lattice.json");
  write_file_atomic(out_dir / "spec.json", synthetic_spec_to_json(spec) + "\n");
  std::string csv = "class,fraction\n";
  for (std::size_t c = 0; c < outcome.fractions.size(); ++c) {
    csv += std::to_string(c) + ',' + fmt(outcome.fractions[c]) + '\n';
  }
  write_file_atomic(out_dir / "class_fractions.csv", csv);
  CheckList checks = outcome.checks;
  checks.plots = {"class_fractions.csv"};
  write_checks(checks, out_dir);
}

// --- variance study ------------------------------------------------------------------

void VarianceConfig::validate() const {
  if (n == 0) throw InvalidInput("n must be positive");
  if (trials < 2) throw InvalidInput("trials must be >= 2");
  if (samplers.empty()) throw InvalidInput("no samplers selected");
  if (cell_shape.empty() || std::find(cell_shape.begin(), cell_shape.end(), 0u) != cell_shape.end()) {
    throw InvalidInput("cell_shape entries must be positive");
  }
}

VarianceConfig variance_config_from_json(const std::string& text, const fs::path& base_dir) {
  const json j = parse_json(text, "variance config");
  VarianceConfig c;
  try {
    if (!j.contains("lattice")) throw InvalidInput("variance config needs 'lattice'");
    c.lattice = source_from_json(j.at("lattice"), base_dir);
    if (j.contains("function")) {
      const auto& f = j.at("function");
      c.function.kind = f.value("kind", c.function.kind);
      c.function.column = f.value("column", c.function.column);
      c.function.class_id = f.value("class", c.function.class_id);
      c.function.weights = f.value("weights", c.function.weights);
      c.function.values = f.value("values", c.function.values);
    }
    if (j.contains("stratification")) {
      const auto& s = j.at("stratification");
      if (s.contains("scheme")) c.scheme = parse_scheme(s.at("scheme").get<std::string>());
      c.cell_shape = s.value("cell_shape", c.cell_shape);
    }
    if (j.contains("samplers")) c.samplers = samplers_from_json(j.at("samplers"));
    c.n = j.value("n", c.n);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    if (j.contains("empty_strata")) c.empty_strata = parse_empty(j.at("empty_strata").get<std::string>());
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad variance config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string variance_config_to_json(const VarianceConfig& c) {
  ordered_json j;
  j["lattice"] = source_to_json(c.lattice);
  ordered_json f;
  f["kind"] = c.function.kind;
  if (c.function.kind == "payload") f["column"] = c.function.column;
  if (c.function.kind == "class_indicator") f["class"] = c.function.class_id;
  if (c.function.kind == "linear") f["weights"] = c.function.weights;
  if (c.function.kind == "values") f["values"] = c.function.values;
  j["function"] = f;
  j["stratification"] = {{"scheme", to_string(c.scheme)}, {"cell_shape", c.cell_shape}};
  j["samplers"] = samplers_to_json(c.samplers);
  j["n"] = c.n;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["empty_strata"] = empty_name(c.empty_strata);
  return j.dump(2) + "\n";
}

VarianceOutcome run_variance_study(const VarianceConfig& config) {
  config.validate();
  const PixelLattice lattice = config.lattice.load();
  const Stratification strat = build_stratification(lattice, config.scheme, config.cell_shape);
  const PixelFunction h = make_pixel_function(config.function, lattice, strat);

  MonteCarloOptions mc;
  mc.samplers = config.samplers;
  mc.jobs = config.jobs;
  mc.empty_strata = config.empty_strata;

  VarianceOutcome out;
  out.report = monte_carlo_study(lattice, strat, h, config.n, config.trials, config.seed, mc);
  out.sample_exceeds_population = config.n > lattice.size();
  const Allocation alloc = allocate_proportional(strat, config.n, config.empty_strata);

  CheckList& checks = out.checks;
  checks.command = "variance";
  if (out.sample_exceeds_population) {
    checks.add("sample_size", CheckStatus::kNotApplicable,
               "n = " + std::to_string(config.n) + " exceeds |P| = " + std::to_string(lattice.size()) +
                   "; draws are with replacement");
  }

  const TheoremCheck th = check_theorem_sg(out.report, alloc);
  checks.add("theorem_sg_gap", th.status,
             th.status == CheckStatus::kNotApplicable
                 ? std::string("allocation is not exactly proportional")
                 : "var_ns - var_sg = " + fmt(th.gap_analytic) + ", weighted gap = " +
                       fmt(th.gap_formula) + ", relative error " + fmt(th.relative_error));

  const LemmaCheck lm = check_lemma_sag(out.report);
  checks.add("lemma_sag_bound", lm.status,
             "var_sag = " + fmt(out.report.var_sag) + ", 2 var_sg = " + fmt(lm.bound) + ", ratio " +
                 fmt(lm.ratio));

  const TotalVarianceCheck tv = check_total_variance(out.report);
  checks.add("total_variance", tv.status,
             "sigma^2 = " + fmt(tv.direct) + ", decomposed = " + fmt(tv.decomposed) +
                 ", relative error " + fmt(tv.relative_error));

  for (const auto& s : out.report.samplers) {
    if (!s.monte_carlo) continue;
    const std::string name = to_string(s.sampler);
    const auto& m = *s.monte_carlo;
    const double band = kMeanBandSigmas * std::sqrt(s.analytic_variance / static_cast<double>(m.trials)) +
                        1e-12 * std::max(1.0, std::abs(s.analytic_mean));
    checks.add("mc_mean_" + name, status_of(std::abs(m.mean - s.analytic_mean) <= band),
               "mc mean " + fmt(m.mean) + ", analytic " + fmt(s.analytic_mean) + ", band " + fmt(band));
    if (m.trials < kMinTrialsForVarianceCheck) {
      checks.add("mc_variance_" + name, CheckStatus::kNotApplicable,
                 "needs >= " + std::to_string(kMinTrialsForVarianceCheck) + " trials");
    } else if (s.analytic_variance == 0.0) {
      checks.add("mc_variance_" + name, status_of(m.variance <= 1e-24),
                 "analytic 0, mc " + fmt(m.variance));
    } else {
      const double rel = std::abs(m.variance - s.analytic_variance) / s.analytic_variance;
      checks.add("mc_variance_" + name, status_of(rel <= kVarianceRelativeTolerance),
                 "mc " + fmt(m.variance) + ", analytic " + fmt(s.analytic_variance) + ", relative " +
                     fmt(rel));
    }
  }
  return out;
}

void write_variance_outputs(const VarianceOutcome& outcome, const VarianceConfig& config,
                            const fs::path& out_dir) {
  ensure_dir(out_dir);
  const VarianceReport& r = outcome.report;
  write_file_atomic(out_dir / "variance_report.json", report_to_json(r));
  write_file_atomic(out_dir / "variance_report.csv", report_to_csv(r));
  write_file_atomic(out_dir / "config.json", variance_config_to_json(config));

  std::string plot = "sampler,analytic_variance,mc_variance,mc_mean,analytic_mean\n";
  for (const auto& s : r.samplers) {
    plot += to_string(s.sampler) + ',' + fmt(s.analytic_variance) + ',' +
            (s.monte_carlo ? fmt(s.monte_carlo->variance) : "") + ',' +
            (s.monte_carlo ? fmt(s.monte_carlo->mean) : "") + ',' + fmt(s.analytic_mean) + '\n';
  }
  write_file_atomic(out_dir / "plot_sampler_variance.csv", plot);

  std::string gap = "stratum,size,weight,draws,mean,variance,covariance,between_term,within_term_sg\n";
  const double n = static_cast<double>(r.n);
  for (std::size_t m = 0; m < r.per_stratum.size(); ++m) {
    const auto& st = r.per_stratum[m];
    const double between = st.weight * (st.mean - r.population_mean) * (st.mean - r.population_mean) / n;
    const double within = st.draws == 0 ? 0.0
                                        : st.weight * st.weight * st.variance / static_cast<double>(st.draws);
    gap += std::to_string(m) + ',' + std::to_string(st.size) + ',' + fmt(st.weight) + ',' +
           std::to_string(st.draws) + ',' + fmt(st.mean) + ',' + fmt(st.variance) + ',' +
           fmt(st.covariance) + ',' + fmt(between) + ',' + fmt(within) + '\n';
  }
  write_file_atomic(out_dir / "plot_gap_decomposition.csv", gap);

  CheckList checks = outcome.checks;
  checks.plots = {"plot_sampler_variance.csv", "plot_gap_decomposition.csv"};
  write_checks(checks, out_dir);
}

// --- convergence -----------------------------------------------------------------------

namespace {

// The convergence study's objective: the contrastive term alone, so the
// trajectories isolate how anchor sampling affects L_contrast.
TrainConfig default_convergence_train() {
  TrainConfig t;
  t.init_gain = 6.0;
  t.objective.sup_weight = 0.0;
  t.objective.loss.lambda1 = 1.0;
  t.objective.loss.lambda2 = 0.0;
  t.objective.loss.lambda3 = 0.0;
  t.schedule.steps = 200;
  t.schedule.alpha = 0.004;
  return t;
}

LatticeSource default_convergence_data() {
  SyntheticSpec s;
  s.dims = {128, 128};
  s.num_classes = 4;
  s.smallest_fraction = 0.02;
  s.seed = 7;
  LatticeSource src;
  src.synthetic = s;
  return src;
}

TrainConfig train_from_json(const json& j, TrainConfig base) {
  // Start from `base` and overlay the fields present in `j`.
  json merged = json::parse(train_config_to_json(base));
  merged.merge_patch(j);
  return train_config_from_json(merged.dump());
}

}  // namespace

ConvergenceExperiment convergence_experiment_from_json(const std::string& text, const fs::path& base_dir) {
  const json j = parse_json(text, "convergence config");
  ConvergenceExperiment e;
  e.data = default_convergence_data();
  e.train = default_convergence_train();
  try {
    if (j.contains("data")) e.data = source_from_json(j.at("data"), base_dir);
    if (j.contains("train")) e.train = train_from_json(j.at("train"), e.train);
    if (j.contains("samplers")) e.samplers = samplers_from_json(j.at("samplers"));
    e.seeds = seeds_from_json(j, "seeds", "num_seeds", e.seeds);
    e.allowed_inversions = j.value("allowed_inversions", e.allowed_inversions);
    e.jobs = j.value("jobs", e.jobs);
  } catch (const json::exception& ex) {
    throw InvalidInput(std::string("bad convergence config: ") + ex.what());
  }
  if (e.seeds.empty()) throw InvalidInput("need at least one seed");
  return e;
}

std::string convergence_experiment_to_json(const ConvergenceExperiment& e) {
  ordered_json j;
  j["data"] = source_to_json(e.data);
  j["train"] = ordered_json::parse(train_config_to_json(e.train));
  j["samplers"] = samplers_to_json(e.samplers);
  j["seeds"] = e.seeds;
  j["allowed_inversions"] = e.allowed_inversions;
  return j.dump(2) + "\n";
}

CheckpointStats checkpoint_stats(const SamplerRuns& runs, CheckpointMetric metric) {
  CheckpointStats st;
  std::vector<const TrajectoryLog*> done;
  for (const auto& r : runs.runs) {
    if (!r.diverged) done.push_back(&r);
  }
  if (done.empty()) return st;
  const std::size_t k = done.front()->checkpoints.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v;
    for (const auto* r : done) {
      const auto& cp = r->checkpoints[c];
      v.push_back(metric == CheckpointMetric::kTrainContrast ? cp.train_contrast : cp.eval_contrast);
    }
    st.steps.push_back(done.front()->checkpoints[c].step);
    st.mean.push_back(mean_of(v));
    st.variance.push_back(variance_of(v));
  }
  return st;
}

StabilityCheck check_stability(const SamplerRuns& ns, const SamplerRuns& sg, std::size_t allowed_inversions) {
  StabilityCheck out;
  out.ns = checkpoint_stats(ns, CheckpointMetric::kTrainContrast);
  out.sg = checkpoint_stats(sg, CheckpointMetric::kTrainContrast);
  if (out.ns.mean.empty() || out.sg.mean.empty() || out.ns.mean.size() != out.sg.mean.size()) {
    return out;
  }
  out.checkpoints = out.ns.mean.size();
  out.final_mean_ok = out.sg.mean.back() <= out.ns.mean.back();
  for (std::size_t c = 0; c < out.checkpoints; ++c) {
    out.variance_not_above += out.sg.variance[c] <= out.ns.variance[c];
  }
  const bool var_ok = out.variance_not_above + allowed_inversions >= out.checkpoints;
  out.status = status_of(out.final_mean_ok && var_ok);
  return out;
}

double mean_epochs_to_threshold(const SamplerRuns& runs, const TrainConfig& config, std::size_t* censored) {
  const std::size_t window = std::max<std::size_t>(1, config.schedule.steps / config.schedule.checkpoints);
  const std::size_t horizon = (config.schedule.steps + window - 1) / window;
  std::vector<double> epochs;
  std::size_t cens = 0;
  for (const auto& r : runs.runs) {
    if (r.steps_to_threshold) {
      epochs.push_back(static_cast<double>((*r.steps_to_threshold + window - 1) / window));
    } else {
      epochs.push_back(static_cast<double>(horizon));
      ++cens;
    }
  }
  if (censored != nullptr) *censored = cens;
  return mean_of(epochs);
}

const SamplerRuns* ConvergenceOutcome::find(Sampler s) const {
  for (const auto& r : samplers) {
    if (r.sampler == s) return &r;
  }
  return nullptr;
}

ConvergenceOutcome run_convergence(const ConvergenceExperiment& e) {
  e.train.validate();
  if (e.seeds.empty()) throw InvalidInput("need at least one seed");
  const PixelLattice lattice = e.data.load();
  const Batch batch{&lattice, nullptr};

  ConvergenceOutcome out;
  for (Sampler s : e.samplers) out.samplers.push_back({s, std::vector<TrajectoryLog>(e.seeds.size())});
  const std::size_t per = e.seeds.size();
  parallel_tasks(e.samplers.size() * per, e.jobs, [&](std::size_t i) {
    SamplerRuns& runs = out.samplers[i / per];
    const std::uint64_t seed = e.seeds[i % per];
    try {
      runs.runs[i % per] = sgd_train(batch, runs.sampler, e.train, seed);
    } catch (const TrainingDiverged& d) {
      runs.runs[i % per] = d.partial();
    }
  });

  CheckList& checks = out.checks;
  checks.command = "convergence";
  for (const auto& runs : out.samplers) {
    std::size_t diverged = 0;
    for (const auto& r : runs.runs) diverged += r.diverged;
    checks.add("finite_" + to_string(runs.sampler), status_of(diverged == 0),
               std::to_string(diverged) + " of " + std::to_string(runs.runs.size()) + " runs diverged");
  }
  const SamplerRuns* ns = out.find(Sampler::kNaive);
  const SamplerRuns* sg = out.find(Sampler::kStratified);
  if (ns == nullptr || sg == nullptr) {
    checks.add("stability_sg_vs_ns", CheckStatus::kNotApplicable, "needs both ns and sg runs");
    checks.add("epochs_to_threshold_sg_vs_ns", CheckStatus::kNotApplicable, "needs both ns and sg runs");
    return out;
  }
  const StabilityCheck st = check_stability(*ns, *sg, e.allowed_inversions);
  std::string detail = "checkpoints " + std::to_string(st.checkpoints);
  if (st.checkpoints > 0) {
    detail += ", final mean sg " + fmt(st.sg.mean.back()) + " vs ns " + fmt(st.ns.mean.back()) +
              ", var_sg <= var_ns at " + std::to_string(st.variance_not_above) + " of " +
              std::to_string(st.checkpoints) + " (allowed inversions " +
              std::to_string(e.allowed_inversions) + ")";
  }
  checks.add("stability_sg_vs_ns", st.status, detail);

  std::size_t cens_ns = 0, cens_sg = 0;
  const double ep_ns = mean_epochs_to_threshold(*ns, e.train, &cens_ns);
  const double ep_sg = mean_epochs_to_threshold(*sg, e.train, &cens_sg);
  checks.add("epochs_to_threshold_sg_vs_ns", status_of(ep_sg <= ep_ns),
             "mean epochs sg " + fmt(ep_sg) + " vs ns " + fmt(ep_ns) + " (censored sg " +
                 std::to_string(cens_sg) + ", ns " + std::to_string(cens_ns) + ")");
  return out;
}

namespace {

std::string mean_std_csv(const SamplerRuns& runs) {
  std::string csv =
      "step,loss_total_mean,loss_total_std,loss_contrast_mean,loss_contrast_std,grad_sq_norm_mean,"
      "grad_sq_norm_std,runs\n";
  std::vector<const TrajectoryLog*> done;
  for (const auto& r : runs.runs) {
    if (!r.diverged) done.push_back(&r);
  }
  if (done.empty()) return csv;
  const std::size_t steps = done.front()->steps.size();
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> total, contrast, g;
    for (const auto* r : done) {
      total.push_back(r->steps[t].total);
      contrast.push_back(r->steps[t].parts.contrast);
      g.push_back(r->steps[t].grad_sq_norm);
    }
    csv += std::to_string(t) + ',' + fmt(mean_of(total)) + ',' + fmt(std::sqrt(variance_of(total))) + ',' +
           fmt(mean_of(contrast)) + ',' + fmt(std::sqrt(variance_of(contrast))) + ',' + fmt(mean_of(g)) +
           ',' + fmt(std::sqrt(variance_of(g))) + ',' + std::to_string(done.size()) + '\n';
  }
  return csv;
}

std::string checkpoints_csv(const SamplerRuns& runs) {
  const auto tr = checkpoint_stats(runs, CheckpointMetric::kTrainContrast);
  const auto ev = checkpoint_stats(runs, CheckpointMetric::kEvalContrast);
  std::string csv =
      "checkpoint,step,train_contrast_mean,train_contrast_var,eval_contrast_mean,eval_contrast_var\n";
  for (std::size_t c = 0; c < tr.mean.size(); ++c) {
    csv += std::to_string(c) + ',' + std::to_string(tr.steps[c]) + ',' + fmt(tr.mean[c]) + ',' +
           fmt(tr.variance[c]) + ',' + fmt(ev.mean[c]) + ',' + fmt(ev.variance[c]) + '\n';
  }
  return csv;
}

}  // namespace

void write_convergence_outputs(const ConvergenceOutcome& outcome, const ConvergenceExperiment& e,
                               const fs::path& out_dir) {
  ensure_dir(out_dir);
  write_file_atomic(out_dir / "config.json", convergence_experiment_to_json(e));
  CheckList checks = outcome.checks;
  ordered_json summary;
  ordered_json per = ordered_json::object();
  for (const auto& runs : outcome.samplers) {
    const std::string name = to_string(runs.sampler);
    std::string traj = trajectory_csv_header();
    for (const auto& r : runs.runs) traj += trajectory_csv_rows(r);
    write_file_atomic(out_dir / ("trajectory_" + name + ".csv"), traj);
    write_file_atomic(out_dir / ("trajectory_" + name + "_mean_std.csv"), mean_std_csv(runs));
    write_file_atomic(out_dir / ("checkpoints_" + name + ".csv"), checkpoints_csv(runs));
    checks.plots.push_back("trajectory_" + name + "_mean_std.csv");
    checks.plots.push_back("checkpoints_" + name + ".csv");

    ordered_json s;
    ordered_json seeds = ordered_json::array(), eta = ordered_json::array(), l_hat = ordered_json::array(),
                 sigma = ordered_json::array(), reached = ordered_json::array(), diverged = ordered_json::array();
    for (const auto& r : runs.runs) {
      seeds.push_back(r.seed);
      eta.push_back(r.step_size);
      l_hat.push_back(r.l_hat);
      sigma.push_back(r.sigma_hat);
      reached.push_back(r.steps_to_threshold ? ordered_json(*r.steps_to_threshold) : ordered_json(nullptr));
      if (r.diverged) diverged.push_back(r.seed);
    }
    std::size_t censored = 0;
    s["seeds"] = seeds;
    s["step_size"] = eta;
    s["l_hat"] = l_hat;
    s["sigma_hat"] = sigma;
    s["steps_to_threshold"] = reached;
    s["epochs_to_threshold_mean"] = mean_epochs_to_threshold(runs, e.train, &censored);
    s["epochs_to_threshold_censored"] = censored;
    s["diverged_seeds"] = diverged;
    const auto tr = checkpoint_stats(runs, CheckpointMetric::kTrainContrast);
    const auto ev = checkpoint_stats(runs, CheckpointMetric::kEvalContrast);
    s["checkpoint_steps"] = tr.steps;
    s["train_contrast_mean"] = tr.mean;
    s["train_contrast_var"] = tr.variance;
    s["eval_contrast_mean"] = ev.mean;
    s["eval_contrast_var"] = ev.variance;
    per[name] = s;
  }
  summary["samplers"] = per;
  ordered_json cj = ordered_json::parse(checks_to_json(checks));
  summary["checks"] = cj["checks"];
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  write_checks(checks, out_dir);
}

// --- noise sweep on the quadratic testbed -----------------------------------------------

SweepConfig sweep_config_from_json(const std::string& text) {
  const json j = parse_json(text, "sweep config");
  SweepConfig c;
  try {
    const json& src = j.contains("sweep") ? j.at("sweep") : j;
    if (src.contains("testbed")) {
      const auto& t = src.at("testbed");
      auto& b = c.testbed;
      b.dim = t.value("dim", b.dim);
      b.min_curvature = t.value("min_curvature", b.min_curvature);
      b.smoothness = t.value("smoothness", b.smoothness);
      b.alpha = t.value("alpha", b.alpha);
      b.threshold = t.value("threshold", b.threshold);
      b.horizon = t.value("horizon", b.horizon);
    }
    c.sigmas = src.value("sigmas", c.sigmas);
    c.horizons = src.value("horizons", c.horizons);
    c.seeds = seeds_from_json(src, "seeds", "num_seeds", c.seeds);
    c.significance = src.value("significance", c.significance);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad sweep config: ") + e.what());
  }
  c.testbed.validate();
  if (c.sigmas.empty() || c.horizons.size() < 2) throw InvalidInput("sweep needs sigmas and >= 2 horizons");
  return c;
}

std::string sweep_config_to_json(const SweepConfig& c) {
  ordered_json j;
  const auto& b = c.testbed;
  j["testbed"] = {{"dim", b.dim},     {"min_curvature", b.min_curvature}, {"smoothness", b.smoothness},
                  {"alpha", b.alpha}, {"threshold", b.threshold},         {"horizon", b.horizon}};
  j["sigmas"] = c.sigmas;
  j["horizons"] = c.horizons;
  j["seeds"] = c.seeds;
  j["significance"] = c.significance;
  return j.dump(2) + "\n";
}

SweepOutcome run_sigma_sweep(const SweepConfig& config) {
  std::vector<std::uint64_t> seeds = config.seeds;
  if (seeds.empty()) {
    for (std::uint64_t s = 0; s < 30; ++s) seeds.push_back(s);
  }
  SweepOutcome out;
  out.levels = noise_controlled_descent(config.testbed, config.sigmas, seeds);
  out.trend = rate_trend(config.testbed, config.sigmas, config.horizons, seeds);

  CheckList& checks = out.checks;
  checks.command = "convergence sweep";
  bool increasing = true;
  std::string means;
  for (std::size_t i = 0; i < out.levels.size(); ++i) {
    if (i > 0 && !(out.levels[i].mean_steps > out.levels[i - 1].mean_steps)) increasing = false;
    means += (i ? ", " : "") + fmt(out.levels[i].mean_steps);
  }
  checks.add("steps_increase_with_sigma", status_of(increasing), "mean steps " + means);
  checks.add("slow_rate_grows_with_sigma", status_of(out.trend.p_value <= config.significance),
             std::to_string(out.trend.positive) + " of " + std::to_string(out.trend.slopes.size()) +
                 " seeds with positive slope, sign-test p = " + fmt(out.trend.p_value));
  return out;
}

void write_sweep_outputs(const SweepOutcome& outcome, const SweepConfig& config, const fs::path& out_dir) {
  ensure_dir(out_dir);
  write_file_atomic(out_dir / "config.json", sweep_config_to_json(config));
  std::string steps = "sigma,step_size,mean_steps,std_steps,censored,runs\n";
  for (const auto& l : outcome.levels) {
    steps += fmt(l.sigma) + ',' + fmt(l.step_size) + ',' + fmt(l.mean_steps) + ',' + fmt(l.std_steps) + ',' +
             std::to_string(l.censored) + ',' + std::to_string(l.runs.size()) + '\n';
  }
  write_file_atomic(out_dir / "sweep_steps.csv", steps);

  const RateTrend& tr = outcome.trend;
  std::string fits = "seed_index,sigma,c1,c2\n";
  for (std::size_t s = 0; s < tr.fits.size(); ++s) {
    for (std::size_t k = 0; k < tr.sigmas.size(); ++k) {
      fits += std::to_string(s) + ',' + fmt(tr.sigmas[k]) + ',' + fmt(tr.fits[s][k].c1) + ',' +
              fmt(tr.fits[s][k].c2) + '\n';
    }
  }
  write_file_atomic(out_dir / "sweep_rate_fits.csv", fits);

  ordered_json summary;
  ordered_json levels = ordered_json::array();
  for (const auto& l : outcome.levels) {
    levels.push_back({{"sigma", l.sigma},
                      {"step_size", l.step_size},
                      {"mean_steps", l.mean_steps},
                      {"std_steps", l.std_steps},
                      {"censored", l.censored}});
  }
  summary["levels"] = levels;
  summary["slopes"] = tr.slopes;
  summary["positive_slopes"] = tr.positive;
  summary["sign_test_p"] = tr.p_value;
  write_file_atomic(out_dir / "sweep_summary.json", summary.dump(2) + "\n");

  CheckList checks = outcome.checks;
  checks.plots = {"sweep_steps.csv", "sweep_rate_fits.csv"};
  write_checks(checks, out_dir);
}

// --- single training run ------------------------------------------------------------------

TrainExperiment train_experiment_from_json(const std::string& text, const fs::path& base_dir) {
  const json j = parse_json(text, "train config");
  TrainExperiment e;
  try {
    if (!j.contains("labeled")) throw InvalidInput("train config needs 'labeled'");
    e.labeled = source_from_json(j.at("labeled"), base_dir);
    if (j.contains("unlabeled")) e.unlabeled = source_from_json(j.at("unlabeled"), base_dir);
    if (j.contains("train")) e.train = train_config_from_json(j.at("train").dump());
    if (j.contains("sampler")) e.sampler = parse_sampler(j.at("sampler").get<std::string>());
    e.seed = j.value("seed", e.seed);
  } catch (const json::exception& ex) {
    throw InvalidInput(std::string("bad train config: ") + ex.what());
  }
  return e;
}

std::string train_experiment_to_json(const TrainExperiment& e) {
  ordered_json j;
  j["labeled"] = source_to_json(e.labeled);
  if (e.unlabeled) j["unlabeled"] = source_to_json(*e.unlabeled);
  j["train"] = ordered_json::parse(train_config_to_json(e.train));
  j["sampler"] = to_string(e.sampler);
  j["seed"] = e.seed;
  return j.dump(2) + "\n";
}

TrainOutcome run_train(const TrainExperiment& e) {
  const PixelLattice labeled = e.labeled.load();
  std::optional<PixelLattice> unlabeled;
  if (e.unlabeled) unlabeled = e.unlabeled->load();
  const Batch batch{&labeled, unlabeled ? &*unlabeled : nullptr};

  TrainOutcome out;
  out.checks.command = "train";
  try {
    out.log = sgd_train(batch, e.sampler, e.train, e.seed);
  } catch (const TrainingDiverged& d) {
    out.log = d.partial();
  }
  out.checks.add("finite", status_of(!out.log.diverged),
                 out.log.diverged ? "diverged after " + std::to_string(out.log.steps.size()) + " steps"
                                  : std::to_string(out.log.steps.size()) + " steps");
  if (!out.log.diverged) {
    const ToyModel model(model_shape(batch, e.train), out.log.final_params);
    const auto pred = predict_labels(forward(model, labeled));
    for (int c = 0; c < labeled.num_classes(); ++c) out.dice.push_back(dice(pred, labeled.classes(), c));
  }
  return out;
}

void write_train_outputs(const TrainOutcome& outcome, const TrainExperiment& e, const fs::path& out_dir) {
  ensure_dir(out_dir);
  write_file_atomic(out_dir / "config.json", train_experiment_to_json(e));
  std::string jsonl;
  for (const auto& r : outcome.log.steps) jsonl += loss_parts_to_json_line(r.step, r.parts, r.total) + '\n';
  write_file_atomic(out_dir / "steps.jsonl", jsonl);
  write_file_atomic(out_dir / "trajectory.csv", trajectory_csv_header() + trajectory_csv_rows(outcome.log));

  ordered_json s;
  s["sampler"] = to_string(outcome.log.sampler);
  s["seed"] = outcome.log.seed;
  s["step_size"] = outcome.log.step_size;
  s["l_hat"] = outcome.log.l_hat;
  s["sigma_hat"] = outcome.log.sigma_hat;
  s["steps"] = outcome.log.steps.size();
  s["diverged"] = outcome.log.diverged;
  s["pretrain_losses"] = outcome.log.pretrain_losses;
  if (!outcome.log.steps.empty()) s["final_loss_total"] = outcome.log.steps.back().total;
  s["dice"] = outcome.dice;
  write_file_atomic(out_dir / "summary.json", s.dump(2) + "\n");

  CheckList checks = outcome.checks;
  checks.plots = {"trajectory.csv"};
  write_checks(checks, out_dir);
}

// --- report ------------------------------------------------------------------------------

ReportSummary build_report(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("no such results directory: " + dir.string());
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file() && it->path().filename() == "checks.json") files.push_back(it->path());
  }
  if (ec) throw IoError("cannot read results directory " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());

  ReportSummary out;
  std::ostringstream text;
  text << "# Results in " << dir.generic_string() << "\n";
  if (files.empty()) {
    text << "\nno results found\n";
    out.text = text.str();
    return out;
  }
  for (const auto& f : files) {
    const CheckList list = checks_from_json(read_file(f));
    const fs::path rel = fs::relative(f.parent_path(), dir);
    const std::string where = rel == "." ? std::string(".") : rel.generic_string();
    ++out.sources;
    text << "\n## " << where << " (" << list.command << ")\n";
    for (const auto& c : list.checks) {
      text << to_string(c.status) << ' ' << c.name;
      if (!c.detail.empty()) text << ": " << c.detail;
      text << '\n';
      out.passed += c.status == CheckStatus::kPass;
      out.failed += c.status == CheckStatus::kFail;
      out.not_applicable += c.status == CheckStatus::kNotApplicable;
    }
    for (const auto& p : list.plots) text << "plot data: " << (rel / p).generic_string() << '\n';
  }
  text << "\n" << out.passed << " passed, " << out.failed << " failed, " << out.not_applicable
       << " not applicable\n";
  out.text = text.str();
  return out;
}

}  // namespace stratvr
