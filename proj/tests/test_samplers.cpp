#include <cmath>
#include <map>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "branchlim/exact_law.hpp"
#include "branchlim/samplers.hpp"
#include "doctest.h"

using namespace branchlim;

namespace {

const auto kBin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5});
const auto kGeo = OffspringDist::geometric(0.5, 60);

// |phat - q| within 4 binomial standard errors.
bool within4se(std::size_t hits, std::size_t n, double q) {
  const double ph = double(hits) / n;
  return std::abs(ph - q) <= 4.0 * std::sqrt(q * (1 - q) / n);
}

// Chi-square goodness of fit at level 1e-3, pooling cells with small expectation.
bool chi_square_ok(const std::map<PlaneTree, std::size_t>& counts, std::size_t n,
                   const std::function<double(const PlaneTree&)>& exact, const std::vector<PlaneTree>& support) {
  double stat = 0.0, pooled_obs = 0.0, pooled_exp = 0.0, listed_obs = 0.0, listed_exp = 0.0;
  int cells = 0;
  for (const auto& t : support) {
    const double e = exact(t) * n;
    const auto it = counts.find(t);
    const double o = it == counts.end() ? 0.0 : double(it->second);
    listed_obs += o;
    listed_exp += e;
    if (e < 5.0) {
      pooled_obs += o;
      pooled_exp += e;
      continue;
    }
    stat += (o - e) * (o - e) / e;
    ++cells;
  }
  // Atoms outside the listed support join the pooled cell.
  pooled_obs += n - listed_obs;
  pooled_exp += n - listed_exp;
  if (pooled_exp >= 5.0) {
    stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  }
  const boost::math::chi_squared chi(cells - 1);
  return stat < boost::math::quantile(boost::math::complement(chi, 1e-3));
}

}  // namespace

TEST_CASE("gw sampler determinism and root law") {
  Rng a(42), b(42);
  for (int i = 0; i < 50; ++i) CHECK(sample_gw(kGeo, a, 100000) == sample_gw(kGeo, b, 100000));
  const std::size_t n = 100000;
  std::size_t deg2 = 0, three = 0;
  Rng base(3);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = base.split(i);
    const auto t = sample_gw(kBin, r, 1u << 20);
    // An oversize tree has root degree 2 and more than 3 nodes.
    deg2 += !t || t->degrees()[0] == 2;
    three += t && t->size() == 3;
  }
  CHECK(within4se(deg2, n, 0.5));
  CHECK(within4se(three, n, 0.125));
}

TEST_CASE("overflow is data") {
  const auto sup = OffspringDist::explicit_pmf({0.1, 0.0, 0.9});
  Rng r(1);
  int overflow = 0;
  for (int i = 0; i < 20; ++i) overflow += !sample_gw(sup, r, 1000).has_value();
  CHECK(overflow > 10);
}

TEST_CASE("immortal prefix sampler") {
  Rng r(9);
  for (int i = 0; i < 100; ++i) CHECK(sample_immortal_prefix(kBin, r, 1).to_string() == "2 0 0");
  const std::size_t n = 100000;
  std::vector<std::size_t> deg(12, 0);
  Rng base(10);
  for (std::size_t i = 0; i < n; ++i) {
    Rng s = base.split(i);
    const auto t = sample_immortal_prefix(kGeo, s, 1);
    if (t.degrees()[0] < deg.size()) deg[t.degrees()[0]]++;
  }
  CHECK(deg[0] == 0);
  for (std::size_t k = 1; k < 8; ++k) CHECK(within4se(deg[k], n, k * std::ldexp(1.0, -int(k) - 1)));
}

TEST_CASE("immortal prefix at b = 3 fits the exact law") {
  const std::size_t n = 100000;
  const auto p_hat = kBin.size_biased();
  std::map<PlaneTree, std::size_t> counts;
  Rng base(77);
  for (std::size_t i = 0; i < n; ++i) {
    Rng s = base.split(i);
    counts[sample_immortal_prefix(kBin, p_hat, s, 3)]++;
  }
  const auto law = immortal_prefix_law(kBin, 3);
  std::vector<PlaneTree> support;
  for (const auto& [t, q] : law.prob) support.push_back(t);
  const auto exact = [&](const PlaneTree& t) { return law.at(t); };
  CHECK(chi_square_ok(counts, n, exact, support));
  CHECK(tv_empirical(counts, n, exact) < 0.02);
}

TEST_CASE("conditioned rejection sampler") {
  Rng r(5);
  std::size_t attempts = 0, accepted = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto s = sample_conditioned(kBin, FunctionalTag::height(), Conditioning::tail(0), r);
    REQUIRE(s.tree);
    CHECK(s.tree->degrees()[0] == 2);
    attempts += s.attempts;
    ++accepted;
  }
  CHECK(within4se(accepted, attempts, 0.5));

  const auto z = sample_conditioned(kBin, FunctionalTag::total_progeny(), Conditioning::point(4), r);
  CHECK(z.zero_mass);
  CHECK_FALSE(z.tree);
  CHECK(z.attempts == 0);

  RejectionBudget tiny;
  tiny.max_attempts = 3;
  const auto e = sample_conditioned(kBin, FunctionalTag::height(), Conditioning::tail(200), r, tiny);
  CHECK(e.exhausted);
}

TEST_CASE("conditioned prefix matches the exact conditioned law") {
  const std::size_t n = 100000;
  std::map<PlaneTree, std::size_t> counts;
  Rng base(123);
  for (std::size_t i = 0; i < n; ++i) {
    Rng s = base.split(i);
    const auto c = sample_conditioned_prefix(kGeo, FunctionalTag::height(), Conditioning::tail(4), 1, s);
    REQUIRE(c.tree);
    counts[*c.tree]++;
  }
  const ConditionedLaw law(kGeo, FunctionalTag::height(), Conditioning::tail(4), 1);
  CHECK(tv_empirical(counts, n, [&](const PlaneTree& t) { return law.prob(t); }) <= 0.02);
}

TEST_CASE("forest sampler") {
  const std::size_t n = 100000;
  std::size_t two = 0;
  Rng base(8);
  for (std::size_t i = 0; i < n; ++i) {
    Rng s = base.split(i);
    const auto f = sample_forest(kBin, 2, s, 1u << 20);
    if (!f) continue;  // oversize forests have more than 2 nodes
    CHECK(f->size() == 2);
    two += functional(*f, FunctionalTag::total_progeny()) == 2;
  }
  CHECK(within4se(two, n, 0.25));
  Rng a(4), b(4);
  CHECK(sample_forest(kGeo, 3, a) == sample_forest(kGeo, 3, b));
}

TEST_CASE("dump format") {
  std::ostringstream os;
  write_dump(os, {"seed 1"}, {PlaneTree::parse("2 0 1 0")});
  CHECK(os.str().find("2 0 1 0") != std::string::npos);
  CHECK(os.str()[0] == '#');
}
