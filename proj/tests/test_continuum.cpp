#include <cmath>
#include <numeric>

#include "branchlim/continuum.hpp"
#include "doctest.h"

using namespace branchlim;

namespace {

struct Sum {
  double s = 0.0, s2 = 0.0;
  void add(double x) {
    s += x;
    s2 += x * x;
  }
};

}  // namespace

TEST_CASE("excursion sup measure") {
  CHECK(excursion_sup_measure(0.0, 2.0, 4.0) == doctest::Approx(1.0 / 8.0));
  CHECK(excursion_sup_measure(1.0, 1.0, 1.0) == doctest::Approx(1.0 / (std::exp(1.0) - 1.0)));
  // alpha -> 0 limit is continuous.
  CHECK(excursion_sup_measure(1e-9, 1.0, 2.0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("stream excursions are pinned nonnegative paths") {
  HeightParams hp{0.0, 1.0, 1e-3};
  ExcursionOptions eo;
  eo.keep_path = true;
  Rng rng(5);
  std::size_t count = 0;
  double occupation = 0.0, zeta = 0.0;
  sample_height_excursions(hp, 50.0, rng, [&](ExcursionRecord&& e) {
    ++count;
    REQUIRE(e.H.size() >= 2);
    CHECK(e.H.front() == 0.0);
    CHECK(e.H.back() == 0.0);
    for (double h : e.H) CHECK_FALSE(h < 0.0);
    CHECK(e.sigma == e.zeta);
    if (e.sup < 0.1) CHECK(local_time(e, 0.2, 0.02) == 0.0);
    if (e.sup > 0.05) {
      // Occupation identity: integral of local time over levels is the lifetime.
      const double eps = 0.02;
      double integral = 0.0;
      for (double b = 0.0; b < e.sup + eps; b += eps) integral += local_time(e, b, eps) * eps;
      occupation += integral;
      zeta += e.zeta;
    }
  }, eo);
  CHECK(count > 100);
  CHECK(std::abs(occupation / zeta - 1.0) < 0.02);
  Rng r(1);
  CHECK_THROWS(sample_height_excursions({0.0, 1.0, 0.01}, 1.0, r, [](ExcursionRecord&&) {}));
  ExcursionRecord e;
  e.dt = 1e-3;
  e.H = {0.0, 0.1, 0.0};
  CHECK_THROWS(local_time(e, 0.0, 1e-3));
}

TEST_CASE("critical height tail scales like 1/b") {
  const auto rows = height_ratio_report({0.0, 1.0, 1e-3}, {0.5, 1.0}, 4000.0, 21, 1);
  for (const auto& r : rows) CHECK(std::abs(r.ratio - 0.5) <= 4 * r.se + 0.02);
}

TEST_CASE("local time expectation decays like exp(-alpha b)") {
  for (double alpha : {0.0, 1.0}) {
    HeightParams hp{alpha, 1.0, 1e-3};
    ExcursionOptions eo;
    eo.levels = {0.5, 1.0};
    eo.eps = 0.02;
    // Ratio of totals over 20 independent blocks, delta-method standard error.
    const int K = 20;
    std::vector<double> a(K, 0.0), c(K, 0.0);
    const Rng base = Rng(33).split(static_cast<std::uint64_t>(alpha));
    for (int blk = 0; blk < K; ++blk) {
      Rng rng = base.split(blk);
      sample_height_excursions(hp, 150.0, rng, [&](ExcursionRecord&& e) {
        a[blk] += e.local_times[0];
        c[blk] += e.local_times[1];
      }, eo);
    }
    const double sa = std::accumulate(a.begin(), a.end(), 0.0), sc = std::accumulate(c.begin(), c.end(), 0.0);
    const double m = sc / sa;
    double v = 0.0;
    for (int i = 0; i < K; ++i) v += (c[i] - m * a[i]) * (c[i] - m * a[i]);
    const double se = std::sqrt(v * K / (K - 1.0)) / sa;
    CHECK(std::abs(m - std::exp(-alpha * 0.5)) <= 4 * se + 0.03);
  }
}

TEST_CASE("excursions above a level") {
  HeightParams hp{0.0, 1.0, 1e-3};
  ExcursionOptions eo;
  eo.keep_path = true;
  eo.tau_level = 0.3;
  Rng rng(77);
  ClimbStats st;
  for (int i = 0; i < 300; ++i) {
    const auto e = sample_excursion_above(hp, 0.3, eo, rng, &st);
    CHECK(e.sup >= 0.3);
    CHECK(std::isfinite(e.tau));
    CHECK(e.H.front() == 0.0);
    CHECK(e.H.back() == 0.0);
    for (const auto& s : sub_excursions_above(e, 0.1)) {
      CHECK(s.H.front() == 0.0);
      CHECK(s.H.back() == 0.0);
      CHECK(s.sup <= e.sup - 0.1 + 1e-12);
    }
  }
  CHECK(st.accepted == 300);
  CHECK(st.attempts >= st.accepted);
  // The grid measure is below the continuous one and close to it for small dt.
  const double est = grid_sup_measure(st, 0.0, 1.0, 0.3);
  CHECK(est <= excursion_sup_measure(0.0, 1.0, 0.3) * 1.05);
  CHECK(est >= excursion_sup_measure(0.0, 1.0, 0.3) * 0.8);
}

TEST_CASE("immortal and condensation heights") {
  Rng rng(4);
  const auto s = immortal_heights(0.0, 1.0, 1e-3, 2.0, rng);
  REQUIRE(!s.left.empty());
  CHECK(s.left[0] == 0.0);
  for (std::size_t i = 1; i < s.spine.size(); ++i) CHECK(s.spine[i] >= s.spine[i - 1]);
  for (std::size_t i = 0; i < s.left.size(); ++i) CHECK(s.left[i] - s.spine[i] >= -1e-12);
  CHECK(std::isinf(s.cap));

  Rng a(9), b(9);
  const auto im = immortal_heights(0.0, 1.0, 1e-3, 1.0, a);
  const auto cd = condensation_heights(0.0, 1.0, 1e-3, 1.0, b);
  CHECK(im.left == cd.left);
  CHECK(im.right == cd.right);

  Rng c(10);
  const auto cap = condensation_heights(2.0, 1.0, 1e-4, 3.0, c);
  CHECK(std::isfinite(cap.cap));
  for (double v : cap.spine) CHECK(v <= cap.cap + 1e-12);
}

TEST_CASE("immortal first passage mean") {
  // Critical beta = 1: left-H is sqrt(2) times a 3d Bessel process, so
  // E[tau_1] = (1/sqrt 2)^2 / 3 = 1/6.
  Sum s;
  const int n = 20000;
  const Rng base(55);
  for (int i = 0; i < n; ++i) {
    Rng r = base.split(i);
    s.add(immortal_first_passage(0.0, 1.0, 1e-4, 1.0, r).tau);
  }
  const double m = s.s / n;
  const double se = std::sqrt((s.s2 / n - m * m) / n);
  CHECK(std::abs(m - 1.0 / 6.0) <= 4 * se + 0.01);
}

TEST_CASE("two-sample KS statistic") {
  CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(ks_statistic({1, 2}, {3, 4}) == 1.0);
  CHECK(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}) == doctest::Approx(0.5));
  CHECK(ks_statistic({1, kInf}, {1, kInf}) == 0.0);
  CHECK(std::isnan(ks_statistic({}, {1.0})));
}

TEST_CASE("theorem L report helpers") {
  TheoremLReport rep;
  rep.rows = {{1.0, 10, 0.20, 0.01}, {2.0, 10, 0.21, 0.01}, {4.0, 10, 0.05, 0.01}};
  CHECK(rep.decreasing(4.0));
  rep.rows[1].ks_tau = 0.30;
  CHECK_FALSE(rep.decreasing(4.0));
  CHECK(parse_continuum_functional(to_string(ContinuumFunctional::Width)) == ContinuumFunctional::Width);
}

TEST_CASE("continuum max-type identity, small run") {
  const auto rows = max_type_continuum({0.0, 1.0, 1e-3}, 1.0, {0.5, 1.0}, 4000, 0.1, 3, 1);
  for (const auto& r : rows)
    CHECK(std::abs(r.p_hat - r.predicted) <= 4 * std::hypot(r.se, r.predicted_se));
}
