#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "stratvr/contrastive.hpp"
#include "stratvr/errors.hpp"
#include "stratvr/rng.hpp"
#include "test_helpers.hpp"

using namespace stratvr;
using stratvr::testing::central_differences;
using stratvr::testing::gradient_relative_error;

namespace {

RepresentationMap map_of(std::vector<double> raw, std::size_t dim, std::size_t classes = 2) {
  const std::size_t pixels = raw.size() / dim;
  return RepresentationMap::from_raw(std::move(raw), dim, std::vector<double>(pixels * classes, 0.0),
                                     classes);
}

std::vector<double> gaussian(std::uint64_t seed, std::size_t n, double scale = 1.0) {
  PhiloxStream rng(seed, 5);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

std::vector<int> random_labels(std::uint64_t seed, std::size_t n, int k) {
  PhiloxStream rng(seed, 6);
  std::vector<int> y(n);
  for (int& c : y) c = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
  return y;
}

// Direct evaluation of the pixel contrastive loss: plain exp/log, every pixel is
// an anchor, classes visited in ascending order.
double direct_contrastive(const std::vector<double>& raw, std::size_t dim, const std::vector<int>& y,
                          double tau) {
  const std::size_t pixels = y.size();
  std::vector<std::vector<double>> r(pixels, std::vector<double>(dim));
  for (std::size_t p = 0; p < pixels; ++p) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) n2 += raw[p * dim + i] * raw[p * dim + i];
    for (std::size_t i = 0; i < dim; ++i) r[p][i] = raw[p * dim + i] / std::sqrt(n2);
  }
  const int k = *std::max_element(y.begin(), y.end()) + 1;
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    std::vector<double> key(dim, 0.0);
    std::size_t count = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (y[p] != c) continue;
      ++count;
      for (std::size_t i = 0; i < dim; ++i) key[i] += r[p][i];
    }
    if (count == 0) continue;
    double kn = 0.0;
    for (double v : key) kn += v * v;
    for (double& v : key) v /= std::sqrt(kn);
    for (std::size_t p = 0; p < pixels; ++p) {
      if (y[p] != c) continue;
      double pos = 0.0;
      for (std::size_t i = 0; i < dim; ++i) pos += r[p][i] * key[i];
      const double num = std::exp(pos / tau);
      double den = num;
      for (std::size_t q = 0; q < pixels; ++q) {
        if (y[q] == c) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < dim; ++i) s += r[p][i] * r[q][i];
        den += std::exp(s / tau);
      }
      total += -std::log(num / den);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("representation map normalizes rows") {
  const auto raw = gaussian(1, 40 * 6);
  const auto m = map_of(raw, 6);
  CHECK(m.pixels == 40);
  for (std::size_t p = 0; p < m.pixels; ++p) CHECK(l2_norm(m.embedding(p)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(map_of(std::vector<double>(7, 1.0), 2), InvalidInput);
  CHECK_THROWS_AS(RepresentationMap::from_raw({1, 0}, 2, {0, 0, 0}, 2), InvalidInput);
}

TEST_CASE("key sets") {
  SUBCASE("one class, no negatives") {
    const auto m = map_of({1, 0, 0, 1, 1, 1}, 2);
    const std::vector<int> y{1, 1, 1};
    const std::vector<PixelIndex> anchors{0, 1, 2};
    const auto keys = build_key_sets(m, y, anchors);
    REQUIRE(keys.classes.size() == 1);
    CHECK(keys.classes[0].class_id == 1);
    CHECK(keys.classes[0].queries.size() == 3);
    CHECK(keys.classes[0].negatives.empty());
    CHECK(contrastive_loss(keys, 0.5) == 0.0);
  }
  SUBCASE("positive key is the renormalized mean") {
    const auto m = map_of({1, 0, 0, 1, -1, 0, 0, -1}, 2);
    const std::vector<int> y{0, 0, 1, 1};
    const std::vector<PixelIndex> anchors{0, 1, 2, 3};
    const auto keys = build_key_sets(m, y, anchors);
    REQUIRE(keys.classes.size() == 2);
    CHECK(keys.classes[0].positive[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(keys.classes[0].positive[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(keys.classes[0].negative_pixels == std::vector<PixelIndex>{2, 3});
    for (const auto& ck : keys.classes) {
      for (PixelIndex q : ck.query_pixels) {
        CHECK(std::find(ck.negative_pixels.begin(), ck.negative_pixels.end(), q) == ck.negative_pixels.end());
      }
    }
  }
  SUBCASE("absent classes are omitted") {
    const auto m = map_of(gaussian(2, 10 * 3), 3, 4);
    const std::vector<int> y{0, 3, 3, 0, 0, 3, 3, 0, 1, 1};
    const std::vector<PixelIndex> anchors{0, 1, 2};
    const auto keys = build_key_sets(m, y, anchors);
    REQUIRE(keys.classes.size() == 2);
    CHECK(keys.classes[0].class_id == 0);
    CHECK(keys.classes[1].class_id == 3);
  }
  SUBCASE("empty anchors") {
    const auto m = map_of({1, 0}, 2);
    const std::vector<int> y{0};
    CHECK_THROWS_AS(build_key_sets(m, y, std::vector<PixelIndex>{}), InvalidInput);
  }
  SUBCASE("grid x class SG anchors hit every present class") {
    const auto lat = testing::random_lattice(8, 16, 16, 4);
    const std::size_t cell[] = {8, 8};
    const auto strat = build_class_grid_stratification(lat, cell);
    const auto sample = sample_sg(strat, allocate_proportional(strat, 2 * strat.size()), 3);
    const auto m = map_of(gaussian(3, lat.size() * 4), 4, 4);
    const auto keys = build_key_sets(m, lat.classes(), sample);
    std::vector<int> present(lat.classes().begin(), lat.classes().end());
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    REQUIRE(keys.classes.size() == present.size());
    for (const auto& ck : keys.classes) CHECK(!ck.queries.empty());
  }
}

TEST_CASE("contrastive loss scalar cases") {
  KeySets keys;
  ClassKeys ck;
  ck.queries = {{1, 0}};
  ck.positive = {1, 0};
  ck.negatives = {{0, 1}};
  keys.classes.push_back(ck);
  const double base = contrastive_loss(keys, 1.0);
  CHECK(base == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(base == doctest::Approx(0.313262).epsilon(1e-6));

  KeySets doubled = keys;
  doubled.classes[0].negatives.push_back({0, 1});
  CHECK(contrastive_loss(doubled, 1.0) > base);

  CHECK_THROWS_AS(contrastive_loss(keys, 0.0), InvalidInput);
  CHECK_THROWS_AS(contrastive_loss(KeySets{}, 1.0), InvalidInput);

  // Extreme temperature stays finite.
  KeySets sharp = keys;
  sharp.classes[0].queries = {{0, 1}};
  CHECK(std::isfinite(contrastive_loss(sharp, 0.01)));
  CHECK(contrastive_loss(sharp, 0.01) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("contrastive loss census equals direct evaluation") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t pixels = 12 + seed % 9, dim = 2 + seed % 4;
    const int k = 1 + static_cast<int>(seed % 4);
    const auto raw = gaussian(100 + seed, pixels * dim);
    const auto y = random_labels(200 + seed, pixels, k);
    const auto m = map_of(raw, dim, static_cast<std::size_t>(k));
    std::vector<PixelIndex> census(pixels);
    std::iota(census.begin(), census.end(), PixelIndex{0});
    for (double tau : {0.1, 0.5, 1.0}) {
      const double got = contrastive_loss(build_key_sets(m, y, census), tau);
      const double want = direct_contrastive(raw, dim, y, tau);
      CHECK(std::abs(got - want) <= 1e-9 * std::abs(want));
      CHECK(got >= 0.0);
    }
  }
  // Single class: exactly zero.
  const auto m = map_of(gaussian(9, 20 * 3), 3);
  const std::vector<int> y(20, 1);
  std::vector<PixelIndex> census(20);
  std::iota(census.begin(), census.end(), PixelIndex{0});
  CHECK(contrastive_loss(build_key_sets(m, y, census), 0.5) == 0.0);
}

TEST_CASE("contrastive loss depends only on the anchor multiset") {
  const auto lat = testing::random_lattice(4, 12, 12, 3);
  const std::size_t cell[] = {6, 6};
  const auto strat = build_class_grid_stratification(lat, cell);
  const auto m = map_of(gaussian(11, lat.size() * 5), 5, 3);
  const auto sample = sample_sag(strat, allocate_proportional(strat, 3 * strat.size()), 21);
  auto flat = sample.flatten();
  const double a = contrastive_loss(build_key_sets(m, lat.classes(), sample), 0.5);
  std::reverse(flat.begin(), flat.end());
  const double b = contrastive_loss(build_key_sets(m, lat.classes(), flat), 0.5);
  CHECK(a == b);
  SampleSet relabeled = sample;
  relabeled.sampler = Sampler::kNaive;
  std::reverse(relabeled.strata.begin(), relabeled.strata.end());
  CHECK(contrastive_loss(build_key_sets(m, lat.classes(), relabeled), 0.5) == a);
}

TEST_CASE("contrastive gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const std::size_t pixels = 8, dim = 3;
    const auto raw = gaussian(300 + seed, pixels * dim);
    const auto y = random_labels(400 + seed, pixels, 3);
    PhiloxStream rng(500 + seed, 1);
    std::vector<PixelIndex> anchors;
    for (int i = 0; i < 10; ++i) anchors.push_back(rng.uniform_index(pixels));
    const double tau = 0.5;
    const auto base = map_of(raw, dim, 3);
    const auto lg = contrastive_loss_grad(base, y, anchors, tau);
    CHECK(lg.value == doctest::Approx(contrastive_loss(build_key_sets(base, y, anchors), tau)).epsilon(1e-13));

    // With respect to the normalized rows directly.
    const auto on_unit = [&](const std::vector<double>& e) {
      RepresentationMap m = base;
      m.embeddings = e;
      return contrastive_loss(build_key_sets(m, y, anchors), tau);
    };
    CHECK(gradient_relative_error(lg.grad, central_differences(on_unit, base.embeddings)) <= 1e-5);

    // Chained through normalization to the raw rows.
    std::vector<double> grad_raw(raw.size(), 0.0);
    for (std::size_t p = 0; p < pixels; ++p) {
      normalize_backward(base.raw_embedding(p), base.norms[p],
                         std::span<const double>(lg.grad).subspan(p * dim, dim),
                         std::span<double>(grad_raw).subspan(p * dim, dim));
    }
    const auto on_raw = [&](const std::vector<double>& r) {
      return contrastive_loss(build_key_sets(map_of(r, dim, 3), y, anchors), tau);
    };
    CHECK(gradient_relative_error(grad_raw, central_differences(on_raw, raw)) <= 1e-5);
  }
}

TEST_CASE("instance discrimination loss") {
  const std::vector<Vec> mined{{1, 0}, {0, 1}};
  SUBCASE("identical sides") {
    const Vec w{0.3, 0.8};
    CHECK(instance_discrimination_loss(w, w, mined, 0.2, 0.2) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("single mined view") {
    const std::vector<Vec> one{{0.2, 1}};
    CHECK(instance_discrimination_loss(Vec{1, 0}, Vec{0, 1}, one, 0.1, 0.01) == 0.0);
  }
  SUBCASE("two-term closed form") {
    const double e = std::exp(1.0);
    const double a = e / (e + 1.0);
    const double want = a * std::log(a / (1 - a)) + (1 - a) * std::log((1 - a) / a);
    const double got = instance_discrimination_loss(Vec{1, 0}, Vec{0, 1}, mined, 1.0, 1.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
    CHECK(got == doctest::Approx((e - 1) / (e + 1)).epsilon(1e-14));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(instance_discrimination_loss(Vec{0, 0}, Vec{0, 1}, mined, 1, 1), InvalidInput);
    CHECK_THROWS_AS(instance_discrimination_loss(Vec{1, 0}, Vec{0, 1}, std::vector<Vec>{}, 1, 1), InvalidInput);
    CHECK_THROWS_AS(instance_discrimination_loss(Vec{1, 0}, Vec{0, 1}, mined, 0, 1), InvalidInput);
  }
  SUBCASE("nonnegative, finite at small temperatures, gradient matches") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const std::size_t dim = 4, n = 5;
      const auto s = gaussian(600 + seed, dim);
      const auto t = gaussian(700 + seed, dim);
      std::vector<Vec> views;
      for (std::size_t i = 0; i < n; ++i) views.push_back(gaussian(800 + 10 * seed + i, dim));
      const double v = instance_discrimination_loss(s, t, views, 0.1, 0.01);
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
      // Milder temperatures keep the finite differences well conditioned.
      const auto lg = instance_discrimination_loss_grad(s, t, views, 0.5, 0.3);
      const auto f = [&](const std::vector<double>& x) {
        return instance_discrimination_loss(x, t, views, 0.5, 0.3);
      };
      CHECK(gradient_relative_error(lg.grad, central_differences(f, s)) <= 1e-5);
    }
  }
}

TEST_CASE("memory bank is FIFO with capacity 36") {
  MemoryBank bank;
  CHECK(bank.capacity() == 36);
  for (int i = 1; i <= 37; ++i) bank.push(MemoryBank::Entry{{static_cast<double>(i)}, i % 3});
  REQUIRE(bank.size() == 36);
  CHECK(bank.entries().front().embedding[0] == 2.0);
  CHECK(bank.entries().back().embedding[0] == 37.0);

  bank.push(std::span<const MemoryBank::Entry>{});
  CHECK(bank.size() == 36);

  MemoryBank b2;
  std::vector<MemoryBank::Entry> items;
  for (int i = 0; i < 72; ++i) items.push_back({{static_cast<double>(i)}, 0});
  b2.push(items);
  REQUIRE(b2.size() == 36);
  for (std::size_t i = 0; i < 36; ++i) CHECK(b2.entries()[i].embedding[0] == static_cast<double>(36 + i));
  CHECK_THROWS_AS(MemoryBank(0), InvalidInput);
}

TEST_CASE("nearest-neighbour loss") {
  const std::vector<Vec> q{{1, 0}};
  SUBCASE("copies of the query") {
    MemoryBank bank;
    for (int i = 0; i < 4; ++i) bank.push({{2, 0}, 0});
    CHECK(nn_loss(q, bank, 3) == doctest::Approx(-1.0).epsilon(1e-15));
  }
  SUBCASE("orthogonal bank") {
    MemoryBank bank;
    bank.push({{0, 1}, 0});
    bank.push({{0, -3}, 1});
    CHECK(nn_loss(q, bank, 5) == doctest::Approx(0.0));
  }
  SUBCASE("top-2 of {0.9, 0.5, -0.1}") {
    MemoryBank bank;
    for (double c : {0.5, -0.1, 0.9}) bank.push({{c, std::sqrt(1 - c * c)}, 0});
    CHECK(nn_loss(q, bank, 2) == doctest::Approx(-0.7).epsilon(1e-14));
  }
  SUBCASE("ties go to the oldest entry") {
    MemoryBank bank;
    bank.push({{0.6, 0.8}, 0});
    bank.push({{0.6, -0.8}, 1});
    // Both tie at 0.6; the value is the same either way, so check the gradient
    // follows the first entry.
    const auto lg = nn_loss_grad(q, bank, 1);
    CHECK(lg.value == doctest::Approx(-0.6));
    CHECK(lg.grad[1] < 0.0);
  }
  SUBCASE("empty bank") {
    CHECK_THROWS_AS(nn_loss(q, MemoryBank{}, 1), InvalidInput);
  }
  SUBCASE("gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const std::size_t dim = 3, nq = 3;
      MemoryBank bank(10);
      for (int i = 0; i < 8; ++i) bank.push({gaussian(900 + 20 * seed + i, dim), 0});
      const auto flat = gaussian(1000 + seed, nq * dim);
      const auto unflatten = [&](const std::vector<double>& x) {
        std::vector<Vec> out;
        for (std::size_t i = 0; i < nq; ++i) out.emplace_back(x.begin() + i * dim, x.begin() + (i + 1) * dim);
        return out;
      };
      const auto lg = nn_loss_grad(unflatten(flat), bank, 3);
      const auto f = [&](const std::vector<double>& x) { return nn_loss(unflatten(x), bank, 3); };
      CHECK(gradient_relative_error(lg.grad, central_differences(f, flat)) <= 1e-5);
    }
  }
}

TEST_CASE("EMA update") {
  std::vector<double> t{1.0};
  ema_update(t, std::vector<double>{0.0}, 0.99);
  CHECK(t[0] == doctest::Approx(0.99).epsilon(1e-15));
  std::vector<double> t2{3.0, -1.0};
  ema_update(t2, std::vector<double>{0.5, 2.0}, 0.0);
  CHECK(t2 == std::vector<double>{0.5, 2.0});
  std::vector<double> t3{0.25, 4.0};
  ema_update(t3, std::vector<double>{0.25, 4.0}, 0.7);
  CHECK(t3 == std::vector<double>{0.25, 4.0});
  CHECK_THROWS_AS(ema_update(t3, std::vector<double>{1.0}, 0.5), InvalidInput);
  CHECK_THROWS_AS(ema_update(t3, std::vector<double>{1.0, 2.0}, 1.0), InvalidInput);

  // Contraction toward the student.
  auto teacher = gaussian(1, 16);
  const auto student = gaussian(2, 16);
  const auto dist = [&] {
    double d = 0.0;
    for (std::size_t i = 0; i < 16; ++i) d += (teacher[i] - student[i]) * (teacher[i] - student[i]);
    return std::sqrt(d);
  };
  const double before = dist();
  ema_update(teacher, student, 0.9);
  CHECK(dist() == doctest::Approx(0.9 * before).epsilon(1e-12));
}

TEST_CASE("unsupervised pseudo-label loss") {
  CHECK(unsup_loss(std::vector<double>{0, 0, 0, 0}, std::vector<double>{1, 0, 0, 3}, 2) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<double> sharp{40, 0, 0, 0, 40, 0};
  CHECK(unsup_loss(sharp, sharp, 3) < 1e-15);

  // K = 3 worked case against a direct softmax / cross-entropy evaluation.
  const std::vector<double> s{0.2, -1.0, 0.7, 1.5, 0.1, -0.3};
  const std::vector<double> t{0.0, 2.0, 1.0, 3.0, 0.0, 0.0};
  const auto ce = [](double a, double b, double c, int y) {
    const double z[3] = {a, b, c};
    return -std::log(std::exp(z[y]) / (std::exp(a) + std::exp(b) + std::exp(c)));
  };
  const double want = 0.5 * (ce(0.2, -1.0, 0.7, 1) + ce(1.5, 0.1, -0.3, 0));
  CHECK(unsup_loss(s, t, 3) == doctest::Approx(want).epsilon(1e-14));
  CHECK_THROWS_AS(unsup_loss(s, std::vector<double>{1, 2, 3}, 3), InvalidInput);

  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto student = gaussian(1100 + seed, 7 * 4);
    const auto teacher = gaussian(1200 + seed, 7 * 4);
    const auto lg = unsup_loss_grad(student, teacher, 4);
    const auto f = [&](const std::vector<double>& x) { return unsup_loss(x, teacher, 4); };
    CHECK(gradient_relative_error(lg.grad, central_differences(f, student)) <= 1e-5);
  }
}

TEST_CASE("supervised Dice + cross-entropy loss") {
  SUBCASE("perfect predictions") {
    const std::vector<double> logits{50, 0, 0, 50, 50, 0};
    const std::vector<int> y{0, 1, 0};
    const auto s = sup_loss_grad(logits, y, 2);
    CHECK(s.value < 1e-6);
    CHECK(s.dice < 1e-6);
  }
  SUBCASE("uniform predictions, balanced labels") {
    const auto s = sup_loss_grad(std::vector<double>(8, 0.0), std::vector<int>{0, 1, 1, 0}, 2);
    CHECK(s.cross_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("2x2 case against a direct evaluation") {
    const std::vector<double> z{1.0, -0.5, 0.3, 0.9, -1.2, 0.4, 2.0, 2.0};
    const std::vector<int> y{0, 1, 1, 0};
    double p[4][2];
    for (int i = 0; i < 4; ++i) {
      const double d = std::exp(z[2 * i]) + std::exp(z[2 * i + 1]);
      p[i][0] = std::exp(z[2 * i]) / d;
      p[i][1] = std::exp(z[2 * i + 1]) / d;
    }
    double ce = 0.0;
    for (int i = 0; i < 4; ++i) ce -= std::log(p[i][y[i]]) / 4.0;
    double dice = 0.0;
    for (int c = 0; c < 2; ++c) {
      double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
      for (int i = 0; i < 4; ++i) {
        inter += p[i][c] * (y[i] == c);
        sum_p += p[i][c];
        sum_g += (y[i] == c);
      }
      dice += 0.5 * (1.0 - (2.0 * inter + 1e-5) / (sum_p + sum_g + 1e-5));
    }
    const auto s = sup_loss_grad(z, y, 2);
    CHECK(s.cross_entropy == doctest::Approx(ce).epsilon(1e-14));
    CHECK(s.dice == doctest::Approx(dice).epsilon(1e-14));
    CHECK(s.value == doctest::Approx(0.5 * ce + 0.5 * dice).epsilon(1e-14));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(sup_loss(std::vector<double>{0, 0}, std::vector<int>{2}, 2), InvalidInput);
    CHECK_THROWS_AS(sup_loss(std::vector<double>{0, 0, 0}, std::vector<int>{0}, 2), InvalidInput);
  }
  SUBCASE("gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto logits = gaussian(1300 + seed, 9 * 3);
      const auto y = random_labels(1400 + seed, 9, 3);
      const auto s = sup_loss_grad(logits, y, 3);
      const auto f = [&](const std::vector<double>& x) { return sup_loss(x, y, 3); };
      CHECK(gradient_relative_error(s.grad, central_differences(f, logits)) <= 1e-5);
    }
  }
}

TEST_CASE("fine-tune configuration and total loss") {
  const FineTuneConfig d;
  CHECK(d.tau == 0.5);
  CHECK(d.tau_s == 0.1);
  CHECK(d.tau_t == 0.01);
  CHECK(d.lambda1 == 0.01);
  CHECK(d.lambda2 == 1.0);
  CHECK(d.lambda3 == 1.0);
  CHECK(d.ema_momentum == 0.99);
  CHECK(d.d_mined == 5);
  CHECK(d.bank_capacity == 36);

  CHECK(total_finetune_loss({}, d) == 0.0);
  CHECK(total_finetune_loss({1, 1, 1, 1}, d) == doctest::Approx(3.01).epsilon(1e-15));
  CHECK_THROWS_AS(total_finetune_loss({1, std::nan(""), 1, 1}, d), InvalidInput);

  for (double l1 : {0.001, 0.005, 0.01, 0.05, 0.1, 1.0}) {
    for (double l2 : {0.1, 1.0, 10.0}) {
      for (double l3 : {0.1, 1.0, 10.0}) {
        FineTuneConfig c;
        c.lambda1 = l1;
        c.lambda2 = l2;
        c.lambda3 = l3;
        CHECK_NOTHROW(c.validate());
      }
    }
  }

  const auto parsed = finetune_config_from_json(R"({"tau": 0.2, "lambda1": 0.05, "K_nn": 3})");
  CHECK(parsed.tau == 0.2);
  CHECK(parsed.lambda1 == 0.05);
  CHECK(parsed.k_nn == 3);
  CHECK(parsed.tau_t == 0.01);
  const auto again = finetune_config_from_json(finetune_config_to_json(parsed));
  CHECK(finetune_config_to_json(again) == finetune_config_to_json(parsed));
  CHECK_THROWS_AS(finetune_config_from_json(R"({"tau": 0})"), InvalidInput);
  CHECK_THROWS_AS(finetune_config_from_json(R"({"tau_t": -1})"), InvalidInput);
  CHECK_THROWS_AS(finetune_config_from_json("{"), InvalidInput);
  CHECK_THROWS_AS(finetune_config_from_json(R"({"tau": "x"})"), InvalidInput);

  CHECK(loss_parts_to_json_line(3, {1, 2, 3, 4}, 10) ==
        R"({"step":3,"loss_total":10.0,"loss_sup":1.0,"loss_contrast":2.0,"loss_unsup":3.0,"loss_nn":4.0})");
}
