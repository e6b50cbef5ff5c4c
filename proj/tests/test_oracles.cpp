#include <cmath>

#include "branchlim/oracles.hpp"
#include "doctest.h"

using namespace branchlim;

TEST_CASE("tree stats by hand") {
  const auto s = oracle::tree_stats({2, 0, 1, 0});
  CHECK(s.height == 2);
  CHECK(s.width == 2);
  CHECK(s.max_degree == 2);
  CHECK(s.leaves == 2);
  CHECK(s.nodes == 4);
  const auto one = oracle::tree_stats({0});
  CHECK(one.height == 0);
  CHECK(one.width == 1);
}

TEST_CASE("tree enumeration counts full binary trees") {
  const auto bin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5});
  // Catalan numbers 1, 1, 2, 5 for 1, 3, 5, 7 nodes.
  std::size_t count = 0;
  double mass = 0.0;
  oracle::for_each_tree(bin, 7, [&](const std::vector<std::uint32_t>& seq, double p) {
    ++count;
    mass += p;
    CHECK(p == doctest::Approx(std::ldexp(1.0, -static_cast<int>(seq.size()))));
  });
  CHECK(count == 9);
  CHECK(mass == doctest::Approx(0.5 + 1.0 / 8 + 2.0 / 32 + 5.0 / 128));
  const auto t = oracle::brute_force_tables(bin, 7, 4);
  CHECK(t.trees == 9);
  CHECK(t.residual == doctest::Approx(1.0 - mass));
}

TEST_CASE("iteration oracles on closed forms") {
  const auto geo = OffspringDist::geometric(0.5, 60);
  const auto h = oracle::height_cdf_iteration(geo, 10);
  for (std::size_t n = 0; n <= 10; ++n) CHECK(std::abs(h[n] - (n + 1.0) / (n + 2.0)) < 1e-14);
  CHECK(std::abs(oracle::maxdeg_cdf_iteration(geo, 1) - 2.0 / 3) < 1e-13);
  CHECK(std::abs(oracle::width_cdf_gauss_seidel(geo, 1) - 2.0 / 3) < 1e-13);
  const auto bin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5});
  const auto leaves = oracle::leaf_count_pmf_series(bin, 4);
  // m leaves means 2m - 1 nodes: Catalan(m-1) 2^{-(2m-1)}.
  CHECK(leaves[0] == 0.0);
  CHECK(leaves[1] == doctest::Approx(0.5));
  CHECK(leaves[2] == doctest::Approx(1.0 / 8));
  CHECK(leaves[3] == doctest::Approx(2.0 / 32));
  CHECK(leaves[4] == doctest::Approx(5.0 / 128));
}
