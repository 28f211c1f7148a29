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

// Command-line front end: gen-data, variance, convergence [sweep], train, report.
// Exit codes: 0 all checks pass, 1 a check failed, 2 usage, config or I/O error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stratvr/errors.hpp"
#include "stratvr/harness.hpp"
#include "stratvr/io.hpp"

namespace fs = std::filesystem;
using namespace stratvr;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string sampler;
  std::optional<std::size_t> trials;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o, const std::string& default_out, bool with_sampler,
                bool with_trials) {
  cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Base seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output directory")->default_val(default_out);
  if (with_sampler) {
    cmd->add_option("--sampler", o.sampler, "Sampler selection")
        ->check(CLI::IsMember({"ns", "sg", "sag", "all"}));
  }
  if (with_trials) cmd->add_option("--trials", o.trials, "Trial or seed count")->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", o.jobs, "Worker threads")->default_val(1)->check(CLI::PositiveNumber);
}

std::string config_text(const CommonOptions& o) { return o.config.empty() ? "{}" : read_file(o.config); }

fs::path config_dir(const CommonOptions& o) {
  return o.config.empty() ? fs::path{} : fs::path(o.config).parent_path();
}

std::optional<std::vector<Sampler>> sampler_selection(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "all") return std::vector<Sampler>{Sampler::kNaive, Sampler::kStratified, Sampler::kAntithetic};
  return std::vector<Sampler>{parse_sampler(s)};
}

// --seed N with k seeds becomes N, N+1, ..., N+k-1; --trials sets k.
std::vector<std::uint64_t> seed_list(std::vector<std::uint64_t> seeds, const CommonOptions& o) {
  if (!o.seed && !o.trials) return seeds;
  const std::size_t count = o.trials ? *o.trials : seeds.size();
  const std::uint64_t base = o.seed ? *o.seed : (seeds.empty() ? 0 : seeds.front());
  seeds.resize(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = base + i;
  return seeds;
}

int print_checks(const CheckList& checks, const fs::path& out) {
  for (const auto& c : checks.checks) {
    std::cout << to_string(c.status) << ' ' << c.name;
    if (!c.detail.empty()) std::cout << ": " << c.detail;
    std::cout << '\n';
  }
  std::cout << "outputs in " << out.generic_string() << '\n';
  return checks.any_failed() ? kExitCheckFailed : kExitPass;
}

int run_gen_data(const CommonOptions& o) {
  SyntheticSpec spec = synthetic_spec_from_json(config_text(o));
  if (o.seed) spec.seed = *o.seed;
  const auto outcome = stratvr::run_gen_data(spec);
  write_gen_data_outputs(outcome, spec, o.out);
  return print_checks(outcome.checks, o.out);
}

int run_variance(const CommonOptions& o) {
  if (o.config.empty()) throw InvalidInput("variance needs --config");
  VarianceConfig cfg = variance_config_from_json(config_text(o), config_dir(o));
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  if (auto s = sampler_selection(o.sampler)) cfg.samplers = *s;
  cfg.jobs = o.jobs;
  cfg.validate();
  const auto outcome = run_variance_study(cfg);
  if (outcome.sample_exceeds_population) {
    std::cerr << "warning: n exceeds the pixel count; draws are with replacement\n";
  }
  write_variance_outputs(outcome, cfg, o.out);
  return print_checks(outcome.checks, o.out);
}

int run_convergence(const CommonOptions& o) {
  ConvergenceExperiment e = convergence_experiment_from_json(config_text(o), config_dir(o));
  e.seeds = seed_list(e.seeds, o);
  if (auto s = sampler_selection(o.sampler)) e.samplers = *s;
  e.jobs = o.jobs;
  const auto outcome = stratvr::run_convergence(e);
  write_convergence_outputs(outcome, e, o.out);
  return print_checks(outcome.checks, o.out);
}

int run_sweep(const CommonOptions& o) {
  SweepConfig cfg = sweep_config_from_json(config_text(o));
  if (cfg.seeds.empty()) {
    for (std::uint64_t s = 0; s < 30; ++s) cfg.seeds.push_back(s);
  }
  cfg.seeds = seed_list(cfg.seeds, o);
  const auto outcome = run_sigma_sweep(cfg);
  write_sweep_outputs(outcome, cfg, o.out);
  return print_checks(outcome.checks, o.out);
}

int run_train(const CommonOptions& o) {
  if (o.config.empty()) throw InvalidInput("train needs --config");
  TrainExperiment e = train_experiment_from_json(config_text(o), config_dir(o));
  if (o.seed) e.seed = *o.seed;
  if (!o.sampler.empty()) {
    if (o.sampler == "all") throw InvalidInput("train runs a single sampler");
    e.sampler = parse_sampler(o.sampler);
  }
  const auto outcome = stratvr::run_train(e);
  write_train_outputs(outcome, e, o.out);
  for (std::size_t c = 0; c < outcome.dice.size(); ++c) {
    std::cout << "dice class " << c << ": " << format_double(outcome.dice[c]) << '\n';
  }
  return print_checks(outcome.checks, o.out);
}

int run_report(const std::string& dir, const std::string& out) {
  const auto summary = build_report(dir);
  std::cout << summary.text;
  if (!out.empty()) write_file_atomic(out, summary.text);
  return summary.failed > 0 ? kExitCheckFailed : kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stratified and antithetic pixel sampling: variance studies and toy training"};
  app.require_subcommand(1);

  CommonOptions gen, var, conv, sweep, train;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic long-tailed lattice");
  add_common(gen_cmd, gen, "results/data", false, false);

  auto* var_cmd = app.add_subcommand("variance", "Analytic and Monte-Carlo variance study with checks");
  add_common(var_cmd, var, "results/variance", true, true);

  auto* conv_cmd = app.add_subcommand("convergence", "Multi-seed SGD trajectories per sampler");
  add_common(conv_cmd, conv, "results/convergence", true, true);
  conv_cmd->require_subcommand(0, 1);
  auto* sweep_cmd = conv_cmd->add_subcommand("sweep", "Noise sweep on the quadratic testbed");
  add_common(sweep_cmd, sweep, "results/sweep", false, true);

  auto* train_cmd = app.add_subcommand("train", "One training run with a JSONL step log and Dice");
  add_common(train_cmd, train, "results/train", true, false);

  std::string report_dir, report_out;
  auto* report_cmd = app.add_subcommand("report", "Summarize every checks.json under a directory");
  report_cmd->add_option("dir", report_dir, "Results directory")->required();
  report_cmd->add_option("--out", report_out, "Also write the summary to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*var_cmd) return run_variance(var);
    if (*sweep_cmd) return run_sweep(sweep);
    if (*conv_cmd) return run_convergence(conv);
    if (*train_cmd) return run_train(train);
    if (*report_cmd) return run_report(report_dir, report_out);
  } catch (const InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
