#include <doctest.h>

#include <cmath>

#include "stratvr/errors.hpp"
#include "stratvr/estimate.hpp"
#include "test_helpers.hpp"

using namespace stratvr;

namespace {

PixelFunction table_function(std::vector<double> values, std::string name = "table") {
  return {[v = std::move(values)](const PixelLattice&, PixelIndex p) { return v[p]; },
          std::move(name)};
}

PixelFunction payload0() {
  return {[](const PixelLattice& lat, PixelIndex p) { return lat.payload_at(p)[0]; }, "payload_0"};
}

// 2x2 lattice, h = 0 on column 0 and 2 on column 1, one stratum per column.
struct ColumnFixture {
  PixelLattice lattice = PixelLattice::uniform({2, 2});
  std::vector<double> values{0, 2, 0, 2};
  Stratification strata = [this] {
    const std::size_t cell[] = {2, 1};
    return build_grid_stratification(lattice, cell);
  }();
};

}  // namespace

TEST_CASE("aggregate_exact") {
  const auto lat = PixelLattice::uniform({3, 5});
  CHECK(aggregate_exact(lat, {[](const PixelLattice&, PixelIndex) { return 2.5; }, "c"}) == 2.5);
  CHECK(aggregate_exact(std::vector<double>{0, 2, 0, 2}) == 1.0);
  const PixelLattice labeled({2, 3}, 2, {0, 1, 1, 0, 1, 1});
  const PixelFunction is0{[](const PixelLattice& l, PixelIndex p) { return l.class_at(p) == 0 ? 1.0 : 0.0; },
                          "is0"};
  CHECK(aggregate_exact(labeled, is0) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
  CHECK_THROWS_AS(aggregate_exact(std::vector<double>{}), InvalidInput);
}

TEST_CASE("estimate") {
  const auto lat = testing::random_lattice(5, 8, 9, 3);
  const std::size_t cell[] = {4, 3};
  const auto s = build_class_grid_stratification(lat, cell);
  const auto values = tabulate(lat, payload0());

  SUBCASE("census sample reproduces the exact aggregate") {
    SampleSet census{Sampler::kStratified, {}};
    for (const auto& st : s.strata()) {
      census.strata.push_back({static_cast<std::int64_t>(st.id()),
                               std::vector<PixelIndex>(st.pixels().begin(), st.pixels().end()),
                               std::vector<Provenance>(st.size(), Provenance::kDrawn)});
    }
    CHECK(estimate(census, s, values) == doctest::Approx(aggregate_exact(values)).epsilon(1e-14));
  }
  SUBCASE("equal-size strata: weighted form equals the 1/M form") {
    const auto grid = PixelLattice::uniform({6, 6});
    const std::size_t c2[] = {3, 2};
    const auto gs = build_grid_stratification(grid, c2);
    std::vector<double> v(36);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(static_cast<double>(i));
    const auto sample = sample_sg(gs, allocate_proportional(gs, 12), 4);
    CHECK(estimate(sample, gs, v) == doctest::Approx(estimate_equal_weight(sample, v)).epsilon(1e-15));
  }
  SUBCASE("single stratum equals the naive estimator on the same draws") {
    const std::size_t whole[] = {8, 9};
    const auto one = build_grid_stratification(lat, whole);
    const auto sample = sample_sg(one, allocate_proportional(one, 17), 3);
    CHECK(estimate(sample, one, values) == estimate_pooled(sample, values));
  }
  SUBCASE("exact-empty strata use their population mean") {
    const auto alloc = allocate_proportional(s, 2, EmptyStrata::kExact);
    const auto sample = sample_sg(s, alloc, 1);
    double expected = 0.0;
    for (std::size_t m = 0; m < s.size(); ++m) {
      double mean = 0.0;
      const auto& st = sample.strata[m];
      if (st.pixels.empty()) {
        for (auto p : s[m].pixels()) mean += values[p];
        mean /= static_cast<double>(s[m].size());
      } else {
        for (auto p : st.pixels) mean += values[p];
        mean /= static_cast<double>(st.pixels.size());
      }
      expected += s.weight(m) * mean;
    }
    CHECK(estimate(sample, s, values, EmptyStrata::kExact) == doctest::Approx(expected).epsilon(1e-13));
    CHECK_THROWS_AS(estimate(sample, s, values), InvalidInput);
  }
  SUBCASE("empty sample") {
    CHECK_THROWS_AS(estimate(SampleSet{}, s, values), InvalidInput);
  }
}

TEST_CASE("analytic_variance fixtures") {
  SUBCASE("2x2 column strata") {
    ColumnFixture f;
    const auto alloc = allocate_proportional(f.strata, 2);
    CHECK(alloc.per_stratum == std::vector<std::size_t>{1, 1});
    const auto r = analytic_variance(f.values, f.strata, alloc);
    CHECK(r.var_sg == 0.0);
    CHECK(r.var_ns == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.gap_weighted == doctest::Approx(0.5).epsilon(1e-15));
    const auto t = check_theorem_sg(r, alloc);
    CHECK(t.status == CheckStatus::kPass);
    CHECK(t.gap_analytic == doctest::Approx(0.5));
    CHECK(t.gap_formula == doctest::Approx(0.5));
  }
  SUBCASE("constant h") {
    const auto lat = testing::random_lattice(2, 6, 6, 3);
    const std::size_t cell[] = {3, 3};
    const auto s = build_class_grid_stratification(lat, cell);
    const auto alloc = allocate_proportional(s, 2 * s.size());
    const auto r = analytic_variance(std::vector<double>(36, 4.0), s, alloc);
    CHECK(r.var_ns == 0.0);
    CHECK(r.var_sg == 0.0);
    CHECK(r.var_sag == 0.0);
    CHECK(check_lemma_sag(r).status == CheckStatus::kPass);
  }
  SUBCASE("perfect antithetic 1x4 stratum") {
    const auto lat = PixelLattice::uniform({1, 4});
    const std::size_t cell[] = {1, 4};
    const auto s = build_grid_stratification(lat, cell);
    CHECK(reflect(s[0], 0) == 3);
    CHECK(reflect(s[0], 1) == 2);
    const auto r = analytic_variance(std::vector<double>{0, 1, 3, 4}, s, Allocation{{2}, 2});
    CHECK(r.per_stratum[0].variance == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(r.per_stratum[0].covariance == doctest::Approx(-2.5).epsilon(1e-15));
    CHECK(r.per_stratum[0].pair_variance == 0.0);
    CHECK(r.var_sag == 0.0);
    CHECK(r.var_sg == doctest::Approx(1.25));
    CHECK(check_lemma_sag(r).status == CheckStatus::kPass);
  }
  SUBCASE("center-symmetric h makes the bound tight") {
    const auto lat = PixelLattice::uniform({8, 8});
    const std::size_t cell[] = {4, 4};
    const auto s = build_grid_stratification(lat, cell);
    std::vector<double> v(lat.size());
    for (const auto& st : s.strata()) {
      for (auto p : st.pixels()) {
        const auto c = lat.coord(p);
        const double dx = static_cast<double>(c[0]) - st.center()[0];
        const double dy = static_cast<double>(c[1]) - st.center()[1];
        v[p] = dx * dx + 0.3 * dy * dy + static_cast<double>(st.id());
      }
    }
    const auto alloc = allocate_proportional(s, 16);
    const auto r = analytic_variance(v, s, alloc);
    for (const auto& sm : r.per_stratum) CHECK(sm.covariance == doctest::Approx(sm.variance));
    CHECK(r.var_sag == doctest::Approx(2.0 * r.var_sg).epsilon(1e-12));
    CHECK(check_lemma_sag(r).status == CheckStatus::kPass);
  }
  SUBCASE("theorem check: equal stratum means and a single stratum give zero gap") {
    const auto lat = PixelLattice::uniform({4, 4});
    const std::size_t cell[] = {2, 2};
    const auto s = build_grid_stratification(lat, cell);
    std::vector<double> v(16);
    for (const auto& st : s.strata()) {
      const double pattern[] = {1, 3, 5, 7};
      std::size_t i = 0;
      for (auto p : st.pixels()) v[p] = pattern[i++];
    }
    const auto alloc = allocate_proportional(s, 8);
    const auto r = analytic_variance(v, s, alloc);
    const auto t = check_theorem_sg(r, alloc);
    CHECK(t.status == CheckStatus::kPass);
    CHECK(t.gap_formula == 0.0);
    CHECK(r.var_sg == doctest::Approx(r.var_ns).epsilon(1e-14));

    const std::size_t whole[] = {4, 4};
    const auto one = build_grid_stratification(lat, whole);
    const auto a1 = allocate_proportional(one, 5);
    const auto r1 = analytic_variance(v, one, a1);
    CHECK(check_theorem_sg(r1, a1).gap_formula == 0.0);
    CHECK(check_theorem_sg(r1, a1).status == CheckStatus::kPass);
  }
  SUBCASE("theorem check is not applicable off-proportion") {
    ColumnFixture f;
    const auto alloc = allocate_proportional(f.strata, 3);
    const auto r = analytic_variance(f.values, f.strata, alloc);
    CHECK(check_theorem_sg(r, alloc).status == CheckStatus::kNotApplicable);
  }
}

TEST_CASE("brute-force enumeration matches the analytic moments") {
  // Every 2D shape with at most 6 pixels, several class maps, all schemes.
  std::size_t cases = 0;
  for (std::size_t rows = 1; rows <= 6; ++rows) {
    for (std::size_t cols = 1; rows * cols <= 6; ++cols) {
      const std::size_t size = rows * cols;
      for (unsigned mask = 0; mask < (1u << size); mask += 1 + size / 3) {
        std::vector<int> classes(size);
        for (std::size_t p = 0; p < size; ++p) classes[p] = (mask >> p) & 1u;
        const PixelLattice lat({rows, cols}, 2, classes);
        PhiloxStream rng(mask, static_cast<std::uint32_t>(size));
        std::vector<double> values(size);
        for (auto& v : values) v = rng.normal() + 3.0 * rng.uniform01();
        const std::size_t cell[] = {std::min<std::size_t>(2, rows), std::min<std::size_t>(2, cols)};
        for (auto scheme : {StratificationScheme::kGrid, StratificationScheme::kClass,
                            StratificationScheme::kGridClass}) {
          const auto s = build_stratification(lat, scheme, cell);
          for (std::size_t n = 1; n <= 3; ++n) {
            const auto mode = n >= s.size() ? EmptyStrata::kGuaranteeOne : EmptyStrata::kExact;
            const auto alloc = allocate_proportional(s, n, mode);
            const auto r = analytic_variance(values, s, alloc);
            for (Sampler smp : {Sampler::kNaive, Sampler::kStratified, Sampler::kAntithetic}) {
              const auto bf = testing::enumerate_sampler(smp, values, s, alloc);
              const auto* summary = r.find(smp);
              REQUIRE(summary != nullptr);
              const double expected_mean = smp == Sampler::kNaive ? r.h_true : summary->analytic_mean;
              CHECK(std::abs(bf.mean - expected_mean) <= 1e-12);
              CHECK(std::abs(bf.variance - summary->analytic_variance) <= 1e-12);
              ++cases;
            }
          }
        }
      }
    }
  }
  CHECK(cases > 300);
}

TEST_CASE("law of total variance on random lattices") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto lat = testing::random_lattice(seed, 10 + seed % 7, 12, 4);
    const std::size_t cell[] = {3, 5};
    const auto s = build_class_grid_stratification(lat, cell);
    const auto r = analytic_variance(lat, s, allocate_proportional(s, s.size()), payload0());
    const auto c = check_total_variance(r);
    CHECK(c.status == CheckStatus::kPass);
    CHECK(c.relative_error <= 1e-10);
    for (const auto& sm : r.per_stratum) {
      if (sm.exact_reflection) CHECK(std::abs(sm.covariance) <= sm.variance * (1 + 1e-12) + 1e-15);
    }
  }
}

TEST_CASE("monte_carlo_study") {
  SUBCASE("constant h has zero Monte-Carlo variance") {
    const auto lat = testing::random_lattice(3, 8, 8, 3);
    const std::size_t cell[] = {4, 4};
    const auto s = build_class_grid_stratification(lat, cell);
    const auto r = monte_carlo_study(lat, s, {[](const PixelLattice&, PixelIndex) { return 1.75; }, "c"},
                                     s.size() * 2, 200, 9);
    for (const auto& sm : r.samplers) {
      REQUIRE(sm.monte_carlo.has_value());
      CHECK(sm.monte_carlo->variance == 0.0);
    }
  }
  SUBCASE("means within CLT bands, variances within 10%") {
    const auto lat = testing::random_lattice(8, 16, 16, 3);
    const std::size_t cell[] = {8, 8};
    const auto s = build_grid_stratification(lat, cell);
    const std::size_t trials = 100000;
    const auto r = monte_carlo_study(lat, s, payload0(), 16, trials, 21);
    for (const auto& sm : r.samplers) {
      REQUIRE(sm.monte_carlo.has_value());
      const double band = 4.0 * std::sqrt(sm.analytic_variance / trials);
      CHECK(std::abs(sm.monte_carlo->mean - sm.analytic_mean) <= band);
      CHECK(relative_difference(sm.monte_carlo->variance, sm.analytic_variance) <= 0.10);
    }
    CHECK(r.var_sg < r.var_ns);
  }
  SUBCASE("fast path agrees with sample_* + estimate, independent of jobs") {
    const auto lat = testing::random_lattice(12, 9, 10, 3);
    const std::size_t cell[] = {3, 3};
    const auto s = build_class_grid_stratification(lat, cell);
    const auto alloc = allocate_proportional(s, 2 * s.size() + 3);
    const auto values = tabulate(lat, payload0());
    for (Sampler smp : {Sampler::kNaive, Sampler::kStratified, Sampler::kAntithetic}) {
      const auto serial = monte_carlo_estimates(smp, lat, s, alloc, values, 57, 4);
      const auto threaded = monte_carlo_estimates(smp, lat, s, alloc, values, 57, 4, 3);
      CHECK(serial == threaded);
      for (std::size_t t : {0u, 13u, 56u}) {
        const auto smp_set = sample(smp, lat, s, alloc, sampler_seed(4, smp), t);
        CHECK(estimate(smp_set, s, values) == serial[t]);
      }
    }
  }
  SUBCASE("needs two trials") {
    const auto lat = PixelLattice::uniform({2, 2});
    const std::size_t cell[] = {2, 2};
    const auto s = build_grid_stratification(lat, cell);
    CHECK_THROWS_AS(monte_carlo_study(lat, s, {[](const PixelLattice&, PixelIndex) { return 0.0; }, "z"}, 2, 1, 0),
                    InvalidInput);
  }
}

TEST_CASE("report serialization") {
  ColumnFixture f;
  auto r = analytic_variance(f.values, f.strata, allocate_proportional(f.strata, 2));
  const std::string csv = report_to_csv(r);
  CHECK(csv.find("ns,1,0.5,") != std::string::npos);
  CHECK(csv.find("sg,1,0,") != std::string::npos);
  const std::string json = report_to_json(r);
  CHECK(json.find("\"var_ns\": 0.5") != std::string::npos);
}
