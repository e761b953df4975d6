#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gridseg/metrics.hpp"
#include "gridseg/rng.hpp"
#include "oracles.hpp"

using namespace gridseg;

namespace {

LabelVolume blank(std::size_t h, std::size_t n, std::size_t m, Spacing sp = {}) {
  return LabelVolume::filled(h, n, m, sp, kBack);
}

LabelVolume random_mask(RngStream& rng, double density) {
  LabelVolume v = blank(8, 8, 8);
  for (auto& x : v.values) x = rng.uniform() < density ? 1 : 0;
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string f;
  while (std::getline(in, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST_SUITE("metrics_postproc") {

TEST_CASE("largest_component examples") {
  LabelVolume one = blank(3, 6, 6);
  one.at(1, 2, 2) = kLv;
  one.at(1, 2, 3) = kLv;
  one.at(0, 0, 0) = kRv;
  one.at(2, 5, 5) = kMyo;
  CHECK(largest_component(one) == one);

  LabelVolume two = blank(4, 6, 6);
  for (std::size_t x = 0; x < 5; ++x)
    for (std::size_t z = 0; z < 2; ++z) two.at(z, 0, x) = kLv;  // 10 voxels
  for (std::size_t x = 0; x < 3; ++x) two.at(3, 5, x) = kLv;    // 3 voxels
  const LabelVolume kept = largest_component(two);
  for (std::size_t x = 0; x < 3; ++x) CHECK(kept.at(3, 5, x) == kBack);
  CHECK(std::count(kept.values.begin(), kept.values.end(), kLv) == 10);

  LabelVolume diag = blank(2, 2, 2);
  diag.at(0, 0, 0) = kLv;
  diag.at(0, 1, 1) = kLv;
  diag.at(1, 1, 0) = kLv;
  const LabelVolume d6 = largest_component(diag);
  CHECK(std::count(d6.values.begin(), d6.values.end(), kLv) == 1);
  CHECK(d6.at(0, 0, 0) == kLv);  // tie goes to the first voxel
  const LabelVolume d26 = largest_component(diag, Connectivity::full26);
  CHECK(d26 == diag);
}

TEST_CASE("label_components numbers components by first voxel") {
  LabelVolume m = blank(1, 3, 5);
  m.at(0, 0, 4) = 1;
  m.at(0, 2, 0) = 1;
  m.at(0, 2, 1) = 1;
  const ComponentMap cm = label_components(m);
  REQUIRE(cm.sizes.size() == 2);
  CHECK(cm.ids[4] == 1);
  CHECK(cm.ids[10] == 2);
  CHECK(cm.sizes[0] == 1);
  CHECK(cm.sizes[1] == 2);
}

TEST_CASE("dice examples and symmetry") {
  LabelVolume a = blank(1, 2, 2), b = blank(1, 2, 2);
  CHECK(dice(a, b) == 1.0);
  a.values = {1, 1, 0, 0};
  CHECK(dice(a, a) == 1.0);
  b.values = {0, 0, 1, 1};
  CHECK(dice(a, b) == 0.0);
  b.values = {0, 1, 1, 0};
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(b, a) == 0.5);
  LabelVolume scaled = a;
  scaled.spacing = {9.0, 0.5, 0.5};
  CHECK(dice(scaled, b) == 0.5);
}

TEST_CASE("hausdorff examples") {
  LabelVolume a = blank(1, 1, 8, {1.0, 1.5, 1.5}), b = a;
  a.at(0, 0, 1) = 1;
  b.at(0, 0, 4) = 1;
  CHECK(hausdorff_mm(a, a, a.spacing) == 0.0);
  CHECK(*hausdorff_mm(a, b, a.spacing) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK_FALSE(hausdorff_mm(a, blank(1, 1, 8), a.spacing).has_value());
}

TEST_CASE("metrics agree with brute-force oracles on random volumes") {
  RngStream rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelVolume a = random_mask(rng, rng.uniform_real(0.05, 0.6));
    const LabelVolume b = random_mask(rng, rng.uniform_real(0.05, 0.6));
    const Spacing sp{rng.uniform_real(1, 8), rng.uniform_real(0.5, 2), rng.uniform_real(0.5, 2)};
    CHECK(dice(a, b) == oracle::dice(a, b));
    CHECK(dice(a, b) == dice(b, a));
    const auto h = hausdorff_mm(a, b, sp), ho = oracle::hausdorff_mm(a, b, sp);
    REQUIRE(h.has_value() == ho.has_value());
    if (h) {
      CHECK(std::abs(*h - *ho) <= 1e-9);
      CHECK(*h == *hausdorff_mm(b, a, sp));
    }
    LabelVolume multi = blank(8, 8, 8);
    for (auto& x : multi.values) x = static_cast<std::uint8_t>(rng.uniform_int(4));
    const LabelVolume lc = largest_component(multi);
    CHECK(lc == oracle::largest_component(multi));
    CHECK(largest_component(lc) == lc);
  }
}

TEST_CASE("volumes, ejection fraction, mass, pearson") {
  LabelVolume m = blank(10, 10, 10);
  for (auto& x : m.values) x = 1;
  CHECK(cavity_volume_ml(m, {1, 1, 1}) == 1.0);
  CHECK(cavity_volume_ml(blank(2, 2, 2), {1, 1, 1}) == 0.0);
  LabelVolume hundred = blank(1, 10, 10);
  for (auto& x : hundred.values) x = 1;
  CHECK(cavity_volume_ml(hundred, {8.0, 1.5, 1.5}) == doctest::Approx(1.8).epsilon(1e-14));

  CHECK(ejection_fraction(80, 80) == 0.0);
  CHECK(ejection_fraction(80, 0) == 100.0);
  CHECK(ejection_fraction(120, 50) == doctest::Approx(58.333333333333336).epsilon(1e-14));
  CHECK_THROWS_AS(ejection_fraction(0, 0), std::invalid_argument);

  CHECK(myocardial_mass_g(0) == 0.0);
  CHECK(myocardial_mass_g(100) == doctest::Approx(105.0).epsilon(1e-15));
  CHECK(myocardial_mass_g(1) == 1.05);

  const std::vector<double> xs{1, 2, 3, 4}, lin{3, 5, 7, 9}, neg{-1, -2, -3, -4};
  CHECK(*pearson(xs, lin) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*pearson(xs, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<double> a{1, 2, 3}, b{1, 3, 2};
  CHECK(*pearson(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<double> flat{2, 2, 2};
  CHECK_FALSE(pearson(a, flat).has_value());
  CHECK_FALSE(pearson(std::vector<double>{1}, std::vector<double>{1}).has_value());
}

TEST_CASE("evaluate_case: identity, all-Back, one-voxel dilation") {
  const Spacing sp{8.0, 1.25, 1.25};
  LabelVolume gt = blank(3, 20, 20, sp);
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 20; ++y)
      for (std::size_t x = 0; x < 20; ++x) {
        const long dy = static_cast<long>(y) - 10, dx = static_cast<long>(x) - 10, r2 = dy * dy + dx * dx;
        if (r2 <= 9) gt.at(z, y, x) = kLv;
        else if (r2 <= 25) gt.at(z, y, x) = kMyo;
        else if (x < 4 && y > 6 && y < 14) gt.at(z, y, x) = kRv;
      }

  const CaseReport same = evaluate_case(gt, gt, gt, gt);
  for (const auto* ph : {&same.ed, &same.es})
    for (const auto& c : ph->classes) {
      CHECK(c.dice == 1.0);
      REQUIRE(c.hausdorff_mm);
      CHECK(*c.hausdorff_mm == 0.0);
    }
  REQUIRE(same.gt.ef_lv);
  CHECK(*same.gt.ef_lv == 0.0);

  const PhaseReport empty = evaluate_phase(blank(3, 20, 20, sp), gt, Phase::ed);
  for (const auto& c : empty.classes) {
    CHECK(c.dice == 0.0);
    CHECK_FALSE(c.hausdorff_mm.has_value());
  }

  // Grow LV by one voxel along +x in every slice.
  LabelVolume pred = gt;
  std::size_t added = 0, lv = 0;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t y = 0; y < 20; ++y)
      for (std::size_t x = 19; x > 0; --x)
        if (gt.at(z, y, x - 1) == kLv && gt.at(z, y, x) != kLv) {
          pred.at(z, y, x) = kLv;
          ++added;
        }
  for (const auto l : gt.values) lv += l == kLv;
  const PhaseReport r = evaluate_phase(pred, gt, Phase::ed);
  CHECK(r.of(kLv).dice == doctest::Approx(2.0 * lv / static_cast<double>(2 * lv + added)).epsilon(1e-15));
  REQUIRE(r.of(kLv).hausdorff_mm);
  CHECK(*r.of(kLv).hausdorff_mm == doctest::Approx(1.25).epsilon(1e-15));

  LabelVolume wrong = blank(2, 20, 20, sp);
  CHECK_THROWS_AS(evaluate_phase(wrong, gt, Phase::ed), std::invalid_argument);
  LabelVolume spaced = gt;
  spaced.spacing.dz = 5.0;
  CHECK_THROWS_AS(evaluate_phase(spaced, gt, Phase::ed), std::invalid_argument);
}

TEST_CASE("evaluate_phase removes stray components first") {
  LabelVolume gt = blank(1, 10, 10);
  for (std::size_t y = 2; y < 5; ++y)
    for (std::size_t x = 2; x < 5; ++x) gt.at(0, y, x) = kLv;
  LabelVolume pred = gt;
  pred.at(0, 9, 9) = kLv;
  CHECK(evaluate_phase(pred, gt, Phase::ed).of(kLv).dice == 1.0);
}

TEST_CASE("cohort CSV layout") {
  std::ostringstream empty;
  write_cohort_csv(empty, {});
  const std::string header = empty.str();
  CHECK(std::count(header.begin(), header.end(), '\n') == 1);
  for (const char* col : {"corr_ef_lv", "corr_ef_rv", "corr_myo_mass_ed", "corr_lv_vol", "corr_rv_vol"})
    CHECK(header.find(col) != std::string::npos);

  LabelVolume ed = blank(2, 8, 8), es = blank(2, 8, 8);
  for (std::size_t y = 2; y < 6; ++y)
    for (std::size_t x = 2; x < 6; ++x) {
      ed.at(0, y, x) = kLv;
      es.at(0, y, x) = (x < 4) ? kLv : kMyo;
    }
  ed.at(1, 0, 0) = kRv;
  ed.at(1, 0, 1) = kRv;
  es.at(1, 0, 0) = kRv;
  std::vector<CohortRow> rows;
  rows.push_back({"a_ed", "a", evaluate_phase(ed, ed, Phase::ed), clinical_indices(ed, es), clinical_indices(ed, es)});
  rows.push_back({"a_es", "a", evaluate_phase(es, es, Phase::es), {}, {}});
  std::ostringstream out;
  write_cohort_csv(out, rows);
  std::istringstream in(out.str());
  std::vector<std::vector<std::string>> table;
  for (std::string line; std::getline(in, line);) table.push_back(split_csv(line));
  REQUIRE(table.size() == 4);
  CHECK(table[3][0] == "mean");
  for (const auto& row : table) CHECK(row.size() == table[0].size());
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(table[0].begin(), table[0].end(), name) - table[0].begin());
  };
  // One patient: correlations are undefined, written as NA.
  CHECK(table[3][col("corr_ef_lv")] == "NA");
  CHECK(table[2][col("corr_ef_lv")] == "NA");
}

}  // TEST_SUITE
