#include <cmath>

#include "branchlim/cb.hpp"
#include "doctest.h"

using namespace branchlim;

namespace {

struct Mean {
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  void add(double x) {
    s += x;
    s2 += x * x;
    ++n;
  }
  double mean() const { return s / n; }
  double se() const { return std::sqrt(std::max(0.0, s2 / n - mean() * mean()) / n); }
};

double final_value(const SamplePath& p) { return p.values.empty() ? 0.0 : p.values.back(); }

}  // namespace

TEST_CASE("v_t closed forms and ODE") {
  const auto crit = BranchingMechanism::feller(0.0, 1.0);
  CHECK(std::abs(cb_v(crit, 1.0, 1.0) - 0.5) < 1e-12);
  const auto sub = BranchingMechanism::feller(1.0, 1.0);
  CHECK(std::abs(cb_v(sub, 1.0, std::log(2.0)) - 1.0 / 3) < 1e-12);
  CHECK(cb_v(crit, 0.0, 3.0) == 0.0);
  // A jump mechanism goes through the numerical integrator; its mass-free
  // limit must reproduce the Riccati solution.
  BranchingMechanism tiny = BranchingMechanism::feller(0.5, 1.0);
  tiny.jump_rate = 1e-12;
  tiny.jumps = JumpLaw{};
  CHECK(std::abs(cb_v(tiny, 2.0, 1.5) - cb_v(BranchingMechanism::feller(0.5, 1.0), 2.0, 1.5)) < 1e-9);
  double prev = 3.0;
  for (double t : {0.1, 0.5, 1.0, 2.0, 8.0}) {
    const double v = cb_v(sub, 3.0, t);
    CHECK(v <= prev);
    prev = v;
  }
  // Derivative in lambda against a central difference.
  const double h = 1e-5;
  CHECK(std::abs(cb_v_dlambda(crit, 1.0, 1.0) - (cb_v(crit, 1 + h, 1.0) - cb_v(crit, 1 - h, 1.0)) / (2 * h)) < 1e-8);
}

TEST_CASE("exact Feller transitions") {
  const std::size_t n = 100000;
  Rng base(2024);
  std::size_t zero = 0;
  Mean lap;
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(i);
    const auto p = sample_feller_cb(0.0, 1.0, 1.0, {0.25, 4}, r);
    const double y = final_value(p);
    zero += y == 0.0;
    lap.add(std::exp(-y));
    for (double v : p.values) CHECK_FALSE(v < 0.0);
  }
  const double q = std::exp(-1.0);
  CHECK(std::abs(double(zero) / n - q) <= 4 * std::sqrt(q * (1 - q) / n));
  CHECK(std::abs(lap.mean() - std::exp(-0.5)) <= 4 * lap.se());
  Rng r(1);
  const auto z = sample_feller_cb(0.0, 1.0, 0.0, {0.1, 10}, r);
  for (double v : z.values) CHECK(v == 0.0);
}

TEST_CASE("branching property") {
  // E_x[exp(-l Y_{t+s})] = E_x[exp(-Y_t v_s(l))] with t = s = 0.5.
  const std::size_t n = 100000;
  const double l = 1.5, x = 1.3;
  const auto m = BranchingMechanism::feller(0.4, 0.8);
  const double vs = cb_v(m, l, 0.5);
  Mean lhs, rhs;
  Rng base(31);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(i);
    const auto p = sample_feller_cb(0.4, 0.8, x, {0.5, 2}, r);
    const double yt = p.values.size() > 1 ? p.values[1] : 0.0;
    lhs.add(std::exp(-l * final_value(p)));
    rhs.add(std::exp(-yt * vs));
  }
  const double exact = std::exp(-x * cb_v(m, l, 1.0));
  CHECK(std::abs(lhs.mean() - exact) <= 4 * lhs.se());
  CHECK(std::abs(rhs.mean() - exact) <= 4 * rhs.se());
  // Absorbed paths stay at zero.
  Rng r(5);
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_feller_cb(0.0, 1.0, 0.3, {0.05, 200}, r);
    bool hit = false;
    for (double v : p.values) {
      if (hit) CHECK(v == 0.0);
      hit = hit || v == 0.0;
    }
  }
}

TEST_CASE("Euler jump-diffusion") {
  const std::size_t n = 40000;
  const double dt = 0.005;
  const auto feller = BranchingMechanism::feller(0.0, 1.0);
  Mean lap;
  Rng base(71);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(i);
    const auto p = sample_jumpdiff_cb(feller, 1.0, {dt, 200}, r);
    CHECK(p.jumps.empty());
    lap.add(std::exp(-final_value(p)));
  }
  const double band = 2.0 * dt * 1.0;
  CHECK(std::abs(lap.mean() - std::exp(-0.5)) <= 4 * lap.se() + band);

  BranchingMechanism jm = BranchingMechanism::feller(0.5, 0.5);
  jm.jump_rate = 1.0;
  jm.jumps = JumpLaw{JumpLaw::Kind::Exp, 0.5};
  Mean mean;
  bool any_jump = false;
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(n + i);
    const auto p = sample_jumpdiff_cb(jm, 1.0, {0.01, 100}, r);
    any_jump = any_jump || !p.jumps.empty();
    mean.add(final_value(p));
  }
  CHECK(any_jump);
  CHECK(std::abs(mean.mean() - std::exp(-0.5)) <= 4 * mean.se() + 2 * 0.01);

  BranchingMechanism fast = BranchingMechanism::feller(20.0, 1.0);
  Rng r(3);
  CHECK_THROWS(sample_jumpdiff_cb(fast, 1.0, {0.01, 10}, r));
}

TEST_CASE("CBI with immigration") {
  const std::size_t n = 100000;
  Mean lap;
  std::size_t zero = 0;
  Rng base(404);
  const auto m = BranchingMechanism::feller(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(i);
    const auto p = sample_cbi(m, 1.0, {0.5, 2}, r);
    const double y = final_value(p);
    zero += y == 0.0;
    lap.add(std::exp(-y));
  }
  CHECK(zero == 0);
  CHECK(std::abs(lap.mean() - 0.25 * std::exp(-0.5)) <= 4 * lap.se());
}

TEST_CASE("path functionals") {
  SamplePath p;
  p.dt = 1.0;
  p.values = {1.0, 0.5, 0.0};
  p.absorbed = true;
  p.absorption_time = 2.0;
  const auto f = cb_functionals(p);
  CHECK(f.W == 1.0);
  CHECK(f.sigma == doctest::Approx(1.0));
  CHECK(f.M == 0.0);
  CHECK_FALSE(f.truncated);

  SamplePath z;
  z.dt = 0.1;
  z.values = {0.0};
  z.absorbed = true;
  const auto fz = cb_functionals(z);
  CHECK(fz.W == 0.0);
  CHECK(fz.sigma == 0.0);
  CHECK(fz.M == 0.0);
  CHECK(fz.extinction_time == 0.0);

  // P_x[W > r] <= x / r.
  const std::size_t n = 20000;
  std::vector<std::size_t> over(3, 0);
  Rng base(12);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(i);
    const auto fw = cb_functionals(sample_feller_cb(0.0, 1.0, 1.0, {0.02, 100000}, r));
    for (int j = 0; j < 3; ++j) over[j] += fw.W > double(2 << j);
  }
  for (int j = 0; j < 3; ++j) {
    const double q = 1.0 / double(2 << j);
    CHECK(double(over[j]) / n <= q + 4 * std::sqrt(q * (1 - q) / n));
  }
}

TEST_CASE("local conditioning identity, small run") {
  LccbOptions o;
  o.r_grid = {3.0};
  o.lambdas = {0.0, 1.0};
  o.reps = 3000;
  o.seed = 8;
  const auto rep = verify_lccb(BranchingMechanism::feller(0.0, 1.0), 1.0, o);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].lhs == doctest::Approx(1.0));
  CHECK(std::abs(rep.rows[0].rhs - 1.0) < 1e-14);
  CHECK(std::abs(rep.rows[1].rhs - 0.25 * std::exp(-0.5)) < 1e-14);
  CHECK(rep.rows[1].se > 0.0);
  CHECK(rep.to_csv().find("lhs") != std::string::npos);
}

TEST_CASE("scale function ratios") {
  const auto crit = BranchingMechanism::feller(0.0, 2.0);
  for (const auto& r : scale_ratio_report(crit, {0.5, 1.0, 2.0}, {3.0, 10.0, 100.0}))
    CHECK(std::abs(r.ratio - r.x) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, r.x));
  CHECK(scale_function(crit, 4.0) == doctest::Approx(2.0));
  const auto sub = BranchingMechanism::feller(1.0, 1.0);
  for (const auto& r : scale_ratio_report(sub, {0.5, 1.0, 2.0}, {5.0, 50.0})) {
    const double control = (std::exp(r.x) - 1.0) / (std::exp(1.0) - 1.0);
    CHECK(std::abs(r.ratio - control) < 1e-12);
  }
}

TEST_CASE("sigma law under N and P_x") {
  for (double beta : {0.5, 1.0, 2.0}) {
    CHECK(sigma_tail_N(beta, 3.0) == doctest::Approx(1.0 / std::sqrt(M_PI * beta * 3.0)));
    for (double l : {0.1, 1.0, 10.0}) CHECK(std::abs(sigma_laplace_quadrature(beta, l) - std::sqrt(l / beta)) < 1e-6);
  }
  // P_x[sigma > r] / N[sigma > r] -> x from the closed form.
  CHECK(std::abs(sigma_tail_exact(1.0, 1.0, 1e6) / sigma_tail_N(1.0, 1e6) - 1.0) < 1e-3);
  const auto rep = sigma_tail_checks(1.0, {20.0}, {1.0}, 2.0, 20000, 0.05, 3, 1);
  REQUIRE(rep.rows.size() == 1);
  const auto& row = rep.rows[0];
  CHECK(std::abs(row.p_hat - sigma_tail_exact(1.0, 1.0, 20.0)) <= 4 * row.p_se + 0.01);
}

TEST_CASE("max-type identity for the extinction time") {
  const auto rows = max_type_cb(0.0, 1.0, 1.0, {0.5, 1.0, 2.0}, 20000, 0.01, 6, 1);
  for (const auto& r : rows) {
    CHECK(r.predicted == doctest::Approx(1.0 - std::exp(-1.0 / r.r)));
    CHECK(std::abs(r.p_hat - r.predicted) <= 4 * r.se);
  }
  CHECK(feller_extinction_tail_N(0.0, 2.0, 4.0) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("mechanism json") {
  const auto m = BranchingMechanism::from_json(
      {{"alpha", 0.2}, {"beta", 1.0}, {"pi", {{"kind", "cpp"}, {"rate", 2.0}, {"jumps", {{"kind", "exp"}, {"mean", 0.5}}}}}});
  CHECK(m.has_jumps());
  CHECK(BranchingMechanism::from_json(m.to_json()).to_json() == m.to_json());
  CHECK_THROWS(BranchingMechanism::from_json({{"alpha", 0.0}, {"beta", 1.0}, {"bogus", 1}}));
  CHECK(m.phi_pq(1.0, 1.0) == doctest::Approx(m.phi_prime(1.0) - m.alpha));
}
