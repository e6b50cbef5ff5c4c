#include <cmath>

#include "branchlim/discrete_lab.hpp"
#include "doctest.h"

using namespace branchlim;

namespace {
const auto kBin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5});
const auto kGeo = OffspringDist::geometric(0.5, 60);
const auto kSub = OffspringDist::explicit_pmf({0.5, 0.5});
}  // namespace

TEST_CASE("tail convergence, exact mode") {
  const auto h2 = run_tail_convergence(kBin, FunctionalTag::height(), 2, {16, 64, 256});
  const auto rows = h2.evaluated();
  REQUIRE(rows.size() == 3);
  CHECK(rows.back()->tv < rows.front()->tv);
  CHECK(rows.back()->tv < 0.02);
  CHECK(std::abs(h2.reference_total + h2.reference_deficiency - 1.0) < 1e-9);

  // Both laws are the point mass on the 2-star; only rounding separates them.
  const auto h1 = run_tail_convergence(kBin, FunctionalTag::height(), 1, {1, 5, 40});
  for (const auto* r : h1.evaluated()) CHECK(r->tv <= 1e-15);

  const auto wr = run_tail_convergence(kBin, FunctionalTag::width(), 2, {8, 16, 32, 64});
  const auto w = wr.evaluated();
  REQUIRE(w.size() == 4);
  for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i]->tv <= w[i - 1]->tv + 1e-9);
}

TEST_CASE("tail convergence, Monte Carlo agrees with exact") {
  // Small support keeps the upward bias of the plug-in TV below the noise.
  LabOptions mc;
  mc.mode = LabMode::MonteCarlo;
  mc.reps = 20000;
  mc.seed = 99;
  const auto ex = run_tail_convergence(kBin, FunctionalTag::height(), 2, {4, 8});
  const auto sim = run_tail_convergence(kBin, FunctionalTag::height(), 2, {4, 8}, mc);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& e = ex.tv_rows[i];
    const auto& s = sim.tv_rows[i];
    CHECK_FALSE(s.exact);
    CHECK(s.se > 0.0);
    CHECK(std::abs(s.tv - e.tv) <= 4 * s.se);
  }
}

TEST_CASE("point convergence") {
  const auto prog = run_point_convergence(kBin, FunctionalTag::total_progeny(), 2, {9, 17, 33, 65});
  const auto pr = prog.evaluated();
  REQUIRE(pr.size() == 4);
  for (std::size_t i = 1; i < pr.size(); ++i) CHECK(pr[i]->tv < pr[i - 1]->tv);
  CHECK(pr.back()->tv < 0.05);

  const auto sub = run_point_convergence(kSub, FunctionalTag::height(), 1, {1, 3, 9});
  REQUIRE(sub.evaluated().size() == 3);
  for (const auto* r : sub.evaluated()) CHECK(r->tv <= 1e-12);

  const auto md = run_point_convergence(kBin, FunctionalTag::max_out_degree(), 1, {2, 4, 8});
  CHECK(md.degenerate_lattice);

  const auto even = run_point_convergence(kBin, FunctionalTag::total_progeny(), 2, {8, 9});
  CHECK(even.tv_rows[0].skipped());
  CHECK_FALSE(even.tv_rows[1].skipped());
}

TEST_CASE("ratio limits") {
  const auto w = run_ratio_limits(kBin, FunctionalTag::width(), {2}, {1}, {64});
  REQUIRE(w.ratio_rows.size() == 1);
  CHECK(std::abs(w.ratio_rows[0].tail_ratio - 1.0) < 0.05);

  const auto m = run_ratio_limits(kGeo, FunctionalTag::max_out_degree(), {2, 3}, {1}, {8, 16});
  for (const auto& r : m.ratio_rows) CHECK(r.gwmax_gap <= 1e-12);

  const auto h = run_ratio_limits(kGeo, FunctionalTag::height(), {3}, {1}, {100});
  // With q_n = n/(n+1) the forest tail is 1 - (1 - v_n)^3.
  const double v = 1.0 / 102.0;
  const double oracle = (1.0 - std::pow(1.0 - v, 3)) / (3.0 * v);
  CHECK(std::abs(h.ratio_rows[0].tail_ratio - oracle) < 1e-12);
  CHECK(std::abs(3.0 * h.ratio_rows[0].tail_ratio - 3.0) < 0.03);
  CHECK(h.ratio_rows[0].shift_ratio.size() == 1);
}

TEST_CASE("conjecture probe reports two distances") {
  const auto p = OffspringDist::heavy_tail(2.5, 0.8, 100000);
  LabOptions o;
  o.mode = LabMode::MonteCarlo;
  o.reps = 300;
  o.seed = 17;
  for (const auto& f : {FunctionalTag::max_out_degree(), FunctionalTag::total_progeny()}) {
    const auto rep = probe_conjectures(p, f, 2, {1000}, o);
    CHECK(rep.exploratory);
    REQUIRE(rep.tv_rows.size() == 1);
    if (!rep.tv_rows[0].skipped()) {
      CHECK(rep.tv_rows[0].tv >= 0.0);
      CHECK(rep.tv_rows[0].tv_alt >= 0.0);
    }
    CHECK(rep.to_csv().find("tv_truncated_spine") != std::string::npos);
  }
}

TEST_CASE("truncated spine reference is a probability law") {
  const auto p = OffspringDist::explicit_pmf({0.5, 0.25, 0.1, 0.1, 0.05});
  const auto trees = enumerate_trees(DegreeSet::all(), 4, 2, 40);
  double total = 0.0;
  for (const auto& t : trees) total += truncated_spine_prob(p, t, 2, 2);
  CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("grid helpers") {
  CHECK(powers_of_two(3, 40) == std::vector<std::size_t>{4, 8, 16, 32});
  CHECK(offspring_tail_above(kBin, 1) == doctest::Approx(0.5));
}
