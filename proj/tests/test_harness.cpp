#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "stratvr/errors.hpp"
#include "stratvr/harness.hpp"
#include "stratvr/io.hpp"

using namespace stratvr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stratvr_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += line.rfind(prefix, 0) == 0;
  return n;
}

std::string csv_row(const std::string& csv, const std::string& first_field) {
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(first_field + ",", 0) == 0) return line;
  }
  return {};
}

// The 2x2 lattice split into columns, h = 0 on column 0 and 2 on column 1.
VarianceConfig column_fixture(const fs::path& dir) {
  save_lattice(PixelLattice({2, 2}, 1, {0, 0, 0, 0}), dir / "grid.json");
  VarianceConfig cfg;
  cfg.lattice.file = dir / "grid.json";
  cfg.function.kind = "values";
  cfg.function.values = {0, 2, 0, 2};
  cfg.scheme = StratificationScheme::kGrid;
  cfg.cell_shape = {2, 1};
  cfg.n = 2;
  cfg.trials = 2000;
  return cfg;
}

}  // namespace

TEST_CASE("variance study: column fixture gives var_ns 0.5 and var_sg 0") {
  const auto dir = fresh_dir("column");
  const auto cfg = column_fixture(dir);
  const auto outcome = run_variance_study(cfg);
  write_variance_outputs(outcome, cfg, dir / "out");
  const std::string csv = read_file(dir / "out" / "variance_report.csv");
  CHECK(csv_row(csv, "ns").rfind("ns,1,0.5,", 0) == 0);
  CHECK(csv_row(csv, "sg").rfind("sg,1,0,", 0) == 0);
  CHECK(outcome.report.var_ns == 0.5);
  CHECK(outcome.report.var_sg == 0.0);
  CHECK(!outcome.checks.any_failed());
  bool theorem_checked = false;
  for (const auto& c : outcome.checks.checks) {
    if (c.name == "theorem_sg_gap") theorem_checked = c.status == CheckStatus::kPass;
  }
  CHECK(theorem_checked);
  for (const char* f : {"variance_report.json", "plot_sampler_variance.csv", "plot_gap_decomposition.csv",
                        "checks.json", "config.json"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
}

TEST_CASE("variance study: constant h gives all-zero variance rows") {
  const auto dir = fresh_dir("constant");
  auto cfg = column_fixture(dir);
  cfg.function.values = {3, 3, 3, 3};
  cfg.trials = 20000;
  const auto outcome = run_variance_study(cfg);
  for (const auto& s : outcome.report.samplers) {
    CHECK(s.analytic_variance == 0.0);
    REQUIRE(s.monte_carlo);
    CHECK(s.monte_carlo->variance == 0.0);
  }
  CHECK(!outcome.checks.any_failed());
}

TEST_CASE("variance study: outputs do not depend on jobs") {
  const auto dir = fresh_dir("jobs");
  VarianceConfig cfg;
  SyntheticSpec spec;
  spec.dims = {24, 24};
  cfg.lattice.synthetic = spec;
  cfg.function.column = 2;
  cfg.n = 40;
  cfg.trials = 3000;
  cfg.jobs = 1;
  write_variance_outputs(run_variance_study(cfg), cfg, dir / "a");
  cfg.jobs = 4;
  write_variance_outputs(run_variance_study(cfg), cfg, dir / "b");
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    CHECK(read_file(e.path()) == read_file(dir / "b" / e.path().filename()));
  }
}

TEST_CASE("variance config: parsing and errors") {
  const auto cfg = variance_config_from_json(
      R"({"lattice": {"file": "x.json"}, "n": 10, "trials": 50, "samplers": ["sg"]})", "/base");
  CHECK(cfg.lattice.file == fs::path("/base/x.json"));
  CHECK(cfg.samplers.size() == 1);
  CHECK_THROWS_AS(variance_config_from_json("{}"), InvalidInput);
  CHECK_THROWS_AS(variance_config_from_json(R"({"lattice": {"file": "x"}, "trials": 1})"), InvalidInput);
  CHECK_THROWS_AS(variance_config_from_json(R"({"lattice": {"file": "x"}, "samplers": ["zz"]})"), InvalidInput);
  CHECK_THROWS_AS(variance_config_from_json("not json"), InvalidInput);
}

TEST_CASE("pixel functions: linear is reflection-odd and center distance reflection-even") {
  const auto lat = PixelLattice::uniform({6, 6});
  const std::vector<std::size_t> cells{3, 3};
  const auto strat = build_stratification(lat, StratificationScheme::kGrid, cells);
  FunctionSpec lin;
  lin.kind = "linear";
  lin.weights = {1.0, 2.0};
  FunctionSpec dist;
  dist.kind = "center_distance";
  const auto f = make_pixel_function(lin, lat, strat);
  const auto g = make_pixel_function(dist, lat, strat);
  for (const auto& st : strat.strata()) {
    const double c = st.center()[0] + 2.0 * st.center()[1];
    for (PixelIndex p : st.pixels()) {
      CHECK(f.eval(lat, p) + f.eval(lat, reflect(st, p)) == doctest::Approx(2.0 * c));
      CHECK(g.eval(lat, p) == g.eval(lat, reflect(st, p)));
    }
  }
  FunctionSpec bad;
  bad.kind = "nope";
  CHECK_THROWS_AS(make_pixel_function(bad, lat, strat), InvalidInput);
}

TEST_CASE("gen-data: fraction check, K = 1, byte-identical files") {
  SyntheticSpec spec;
  spec.dims = {128, 128};
  spec.num_classes = 4;
  spec.smallest_fraction = 0.02;
  spec.seed = 5;
  const auto out = run_gen_data(spec);
  CHECK(out.fractions.back() >= 0.016);
  CHECK(out.fractions.back() <= 0.024);
  CHECK(!out.checks.any_failed());

  const auto dir = fresh_dir("gen");
  write_gen_data_outputs(out, spec, dir / "a");
  write_gen_data_outputs(run_gen_data(spec), spec, dir / "b");
  for (const char* f : {"lattice.json", "lattice.csv", "spec.json", "checks.json"}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
  const auto back = load_lattice(dir / "a" / "lattice.json");
  CHECK(back == out.lattice);

  spec.num_classes = 1;
  spec.dims = {16, 16};
  const auto one = run_gen_data(spec);
  for (int c : one.lattice.classes()) CHECK(c == 0);
}

TEST_CASE("gen-data: unwritable path raises IoError") {
  const auto dir = fresh_dir("unwritable");
  write_file_atomic(dir / "file", "x");
  SyntheticSpec spec;
  spec.dims = {8, 8};
  CHECK_THROWS_AS(write_gen_data_outputs(run_gen_data(spec), spec, dir / "file" / "sub"), IoError);
}

TEST_CASE("convergence: 1 seed, T = 10 gives a 10-row trajectory per sampler") {
  ConvergenceExperiment e;
  SyntheticSpec spec;
  spec.dims = {32, 32};
  e.data.synthetic = spec;
  e.train.anchors = 64;
  e.train.cell_shape = {16, 16};
  e.train.schedule.steps = 10;
  e.seeds = {3};
  const auto out = run_convergence(e);
  REQUIRE(out.samplers.size() == 3);
  const auto dir = fresh_dir("conv");
  write_convergence_outputs(out, e, dir);
  for (const char* s : {"ns", "sg", "sag"}) {
    const std::string traj = read_file(dir / ("trajectory_" + std::string(s) + ".csv"));
    CHECK(std::count(traj.begin(), traj.end(), '\n') == 11);
    const std::string ms = read_file(dir / ("trajectory_" + std::string(s) + "_mean_std.csv"));
    CHECK(std::count(ms.begin(), ms.end(), '\n') == 11);
  }
  CHECK(fs::exists(dir / "summary.json"));
}

TEST_CASE("convergence config: defaults and overlay") {
  const auto e = convergence_experiment_from_json(R"({"train": {"schedule": {"steps": 7}}, "num_seeds": 3})");
  CHECK(e.train.schedule.steps == 7);
  CHECK(e.train.schedule.alpha == 0.004);
  CHECK(e.train.objective.sup_weight == 0.0);
  CHECK(e.seeds == std::vector<std::uint64_t>{0, 1, 2});
  REQUIRE(e.data.synthetic);
  CHECK(e.data.synthetic->dims == std::vector<std::size_t>{128, 128});
  const auto again = convergence_experiment_from_json(convergence_experiment_to_json(e));
  CHECK(convergence_experiment_to_json(again) == convergence_experiment_to_json(e));
}

TEST_CASE("stability check counts variance inversions and compares final means") {
  auto runs_with = [](Sampler s, std::vector<std::vector<double>> per_seed) {
    SamplerRuns r;
    r.sampler = s;
    for (const auto& cps : per_seed) {
      TrajectoryLog log;
      for (std::size_t c = 0; c < cps.size(); ++c) log.checkpoints.push_back({c + 1, cps[c], 0.0});
      r.runs.push_back(log);
    }
    return r;
  };
  const auto ns = runs_with(Sampler::kNaive, {{1.0, 2.0, 3.0}, {3.0, 2.0, 5.0}});
  const auto sg_good = runs_with(Sampler::kStratified, {{1.5, 1.0, 2.0}, {2.5, 1.0, 2.0}});
  const auto a = check_stability(ns, sg_good, 1);
  CHECK(a.variance_not_above == 3);
  CHECK(a.final_mean_ok);
  CHECK(a.status == CheckStatus::kPass);

  // Variance inverted at two checkpoints.
  const auto sg_noisy = runs_with(Sampler::kStratified, {{0.0, 0.0, 2.0}, {4.0, 4.0, 2.0}});
  CHECK(check_stability(ns, sg_noisy, 1).status == CheckStatus::kFail);
  CHECK(check_stability(ns, sg_noisy, 2).status == CheckStatus::kPass);

  // Final mean above NS.
  const auto sg_high = runs_with(Sampler::kStratified, {{1.5, 2.0, 9.0}, {2.5, 2.0, 9.0}});
  CHECK(!check_stability(ns, sg_high, 1).final_mean_ok);
}

TEST_CASE("sigma sweep emits an increasing steps table") {
  SweepConfig cfg;
  for (std::uint64_t s = 0; s < 30; ++s) cfg.seeds.push_back(s);
  const auto out = run_sigma_sweep(cfg);
  REQUIRE(out.levels.size() == 4);
  for (std::size_t i = 1; i < out.levels.size(); ++i) CHECK(out.levels[i].mean_steps > out.levels[i - 1].mean_steps);
  CHECK(!out.checks.any_failed());
}

TEST_CASE("train: JSONL step log and Dice per class") {
  TrainExperiment e;
  SyntheticSpec spec;
  spec.dims = {24, 24};
  spec.num_classes = 3;
  spec.smallest_fraction = 0.1;
  e.labeled.synthetic = spec;
  spec.seed = 9;
  e.unlabeled = LatticeSource{};
  e.unlabeled->synthetic = spec;
  e.train.anchors = 48;
  e.train.cell_shape = {8, 8};
  e.train.schedule.steps = 6;
  e.train.schedule.checkpoints = 3;
  const auto out = run_train(e);
  CHECK(out.dice.size() == 3);
  const auto dir = fresh_dir("train");
  write_train_outputs(out, e, dir);
  const std::string jsonl = read_file(dir / "steps.jsonl");
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 6);
  CHECK(jsonl.rfind("{\"step\":0,\"loss_total\":", 0) == 0);
}

TEST_CASE("report: pass-only, one injected failure, empty and missing directories") {
  const auto dir = fresh_dir("report");
  CheckList good;
  good.command = "variance";
  good.add("a", CheckStatus::kPass, "fine");
  good.add("b", CheckStatus::kNotApplicable, "skipped");
  good.plots = {"plot.csv"};
  fs::create_directories(dir / "one");
  write_file_atomic(dir / "one" / "checks.json", checks_to_json(good));
  const auto all_pass = build_report(dir);
  CHECK(count_lines_starting(all_pass.text, "FAIL") == 0);
  CHECK(all_pass.passed == 1);
  CHECK(all_pass.text.find("one/plot.csv") != std::string::npos);

  CheckList bad;
  bad.command = "convergence";
  bad.add("stability_sg_vs_ns", CheckStatus::kFail, "injected");
  fs::create_directories(dir / "two");
  write_file_atomic(dir / "two" / "checks.json", checks_to_json(bad));
  const auto one_fail = build_report(dir);
  CHECK(count_lines_starting(one_fail.text, "FAIL") == 1);
  CHECK(one_fail.text.find("FAIL stability_sg_vs_ns") != std::string::npos);
  CHECK(one_fail.failed == 1);

  const auto empty = fresh_dir("report_empty");
  CHECK(build_report(empty).text.find("no results found") != std::string::npos);
  CHECK_THROWS_AS(build_report(dir / "missing"), IoError);
}

TEST_CASE("checks JSON round-trips") {
  CheckList c;
  c.command = "x";
  c.add("n", CheckStatus::kFail, "d");
  c.plots = {"p.csv"};
  CHECK(checks_to_json(checks_from_json(checks_to_json(c))) == checks_to_json(c));
  CHECK_THROWS_AS(checks_from_json(R"({"checks": [{"name": "a", "status": "MAYBE"}]})"), InvalidInput);
}
