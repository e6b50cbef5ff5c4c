#include <cmath>

#include "branchlim/offspring.hpp"
#include "doctest.h"

using namespace branchlim;
using doctest::Approx;

TEST_CASE("pgf") {
  const auto bin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5});
  CHECK(bin.pgf(0.5) == Approx(5.0 / 8).epsilon(1e-15));
  CHECK(std::abs(bin.pgf(1.0) - 1.0) <= 1e-12);
  const auto geo = OffspringDist::geometric(0.5, 200);
  // Geometric series 1/(2 - s); truncation at 200 is far below double precision.
  CHECK(std::abs(geo.pgf(0.5) - 1.0 / 1.5) <= 1e-15);
  CHECK(std::abs(geo.pgf(1.0) - 1.0) <= 1e-12);
  CHECK_THROWS_AS(bin.pgf(1.5), std::domain_error);
  CHECK_THROWS_AS(bin.pgf(-0.1), std::domain_error);
}

TEST_CASE("size biasing") {
  const auto bin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5}).size_biased();
  CHECK(bin[2] == Approx(1.0));
  CHECK(bin[0] == 0.0);
  const auto geo = OffspringDist::geometric(0.5, 200).size_biased();
  for (std::size_t k = 1; k < 30; ++k) CHECK(std::abs(geo[k] - k * std::ldexp(1.0, -static_cast<int>(k) - 1)) < 1e-14);
  const auto sub = OffspringDist::explicit_pmf({0.5, 0.5}).size_biased();
  CHECK(sub[1] == Approx(1.0));
}

TEST_CASE("classification") {
  CHECK(OffspringDist::explicit_pmf({0.5, 0.0, 0.5}).classify() == Criticality::Critical);
  CHECK(OffspringDist::explicit_pmf({0.6, 0.2, 0.2}).classify() == Criticality::Subcritical);
  CHECK(OffspringDist::explicit_pmf({0.2, 0.2, 0.6}).classify() == Criticality::Supercritical);
  CHECK(OffspringDist::geometric(0.5).classify() == Criticality::Critical);
}

TEST_CASE("invalid laws rejected") {
  CHECK_THROWS_AS(OffspringDist::explicit_pmf({0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(OffspringDist::explicit_pmf({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(OffspringDist::explicit_pmf({-0.1, 0.6, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(OffspringDist::explicit_pmf({1.0}), std::invalid_argument);
}

TEST_CASE("built-in families: mass, truncation and Cauchy-Schwarz") {
  const std::vector<OffspringDist> laws{
      OffspringDist::explicit_pmf({0.5, 0.0, 0.5}), OffspringDist::geometric(0.5),
      OffspringDist::geometric(0.3), OffspringDist::poisson(1.0), OffspringDist::poisson(0.7),
      OffspringDist::heavy_tail(2.5, 0.8, 100000), OffspringDist::heavy_tail(2.5, 1.0, 100000)};
  for (const auto& p : laws) {
    double s = 0.0, m = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < p.pmf().size(); ++k) {
      s += p[k];
      m += k * p[k];
      m2 += double(k) * k * p[k];
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
    CHECK(m == Approx(p.mean()).epsilon(1e-10));
    CHECK(p.size_biased().mean() >= p.mean() * (1 - 1e-12));
    CHECK(p.size_biased().mean() == Approx(m2 / m).epsilon(1e-9));
    if (p.family() == "geometric" || p.family() == "poisson") CHECK(p.truncation_mass() < 1e-10);
  }
  CHECK(OffspringDist::geometric(0.5).classify() == Criticality::Critical);
  CHECK(OffspringDist::heavy_tail(2.5, 0.8, 100000).classify() == Criticality::Subcritical);
}

TEST_CASE("json round trip") {
  const auto g = OffspringDist::from_json({{"family", "geometric"}, {"a", 0.5}});
  CHECK(g.mean() == Approx(1.0));
  const auto e = OffspringDist::from_json({{"family", "explicit"}, {"pmf", {0.5, 0.0, 0.5}}});
  CHECK(OffspringDist::from_json(e.to_json()).pmf() == e.pmf());
}

TEST_CASE("alias draws follow the pmf") {
  const auto p = OffspringDist::explicit_pmf({0.2, 0.3, 0.5});
  std::vector<int> c(3, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) c[p.draw((i + 0.5) / n)]++;
  for (int k = 0; k < 3; ++k) CHECK(std::abs(c[k] / double(n) - p[k]) < 1e-3);
}
