#include <cmath>

#include "branchlim/exact_law.hpp"
#include "branchlim/oracles.hpp"
#include "doctest.h"

using namespace branchlim;
using doctest::Approx;

namespace {

const auto kBin = OffspringDist::explicit_pmf({0.5, 0.0, 0.5});
const auto kGeo = OffspringDist::geometric(0.5, 60);
const auto kSub = OffspringDist::explicit_pmf({0.5, 0.5});

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("height tail") {
  const auto g = height_tail(kGeo, 10);
  // Closed form P[H >= n] = 1/(n+1) for the critical geometric law.
  for (std::size_t n = 0; n <= 10; ++n) CHECK(close(g.tail[n], 1.0 / (n + 2), 1e-14));
  const auto b = height_tail(kBin, 4);
  CHECK(b.tail[0] == Approx(0.5));
  CHECK(close(b.tail[1], 3.0 / 8, 1e-15));
  CHECK(close(b.tail[0] + b.point[0], 1.0, 1e-15));
  for (std::size_t n = 1; n < b.size(); ++n) CHECK(close(b.point[n], b.tail[n - 1] - b.tail[n], 1e-15));
}

TEST_CASE("maxdeg tail") {
  CHECK(close(maxdeg_cdf(kBin, 1), 0.5, 1e-14));
  const auto g = maxdeg_tail(kGeo, 4);
  CHECK(close(g.tail[1], 1.0 / 3, 1e-13));
  const auto b = maxdeg_tail(kBin, 6);
  for (std::size_t n = 2; n <= 6; ++n) CHECK(b.tail[n] == 0.0);
  CHECK(b.point[1] == 0.0);
}

TEST_CASE("progeny pmf and count in set") {
  const auto t = progeny_pmf(kBin, 9, {2});
  CHECK(close(t.point[1], 0.5, 1e-15));
  CHECK(close(t.point[3], 1.0 / 8, 1e-15));
  CHECK(close(t.forest_point.at(2)[2], 0.25, 1e-15));
  CHECK(t.point[2] == 0.0);
  const auto all = count_in_set_pmf(kBin, DegreeSet::all(), 9);
  for (std::size_t n = 0; n <= 9; ++n) CHECK(close(all.point[n], t.point[n], 1e-14));
  const auto leaves = count_in_set_pmf(kBin, DegreeSet::of({0}), 6);
  CHECK(close(leaves.point[1], 0.5, 1e-15));
  CHECK(close(leaves.point[2], 1.0 / 8, 1e-15));
}

TEST_CASE("width cdf") {
  CHECK(close(width_cdf(kBin, 1, 1), 0.5, 1e-14));
  CHECK(close(width_cdf(kGeo, 1, 1), 2.0 / 3, 1e-13));
  double prev = 0.0;
  for (std::size_t n : {1, 2, 4, 8, 16, 32, 64}) {
    const double c = width_cdf(kBin, 1, n);
    CHECK(c >= prev - 1e-15);
    prev = c;
  }
  CHECK(prev > 0.95);
  CHECK(prev <= 1.0);
}

TEST_CASE("prefix probabilities") {
  CHECK(close(prefix_prob(kBin, PlaneTree::parse("2 0 0"), 1), 0.5, 1e-15));
  CHECK(close(prefix_prob(kBin, PlaneTree::parse("2 0 0"), 2), 1.0 / 8, 1e-15));
  CHECK(close(prefix_prob(kGeo, PlaneTree::parse("2 0 1 0"), 2), 1.0 / 64, 1e-15));
  CHECK_THROWS_AS(prefix_prob(kBin, PlaneTree::parse("2 0 1 0"), 1), std::invalid_argument);
}

TEST_CASE("immortal prefix law") {
  const auto b1 = immortal_prefix_law(kBin, 1);
  CHECK(close(b1.at(PlaneTree::parse("2 0 0")), 1.0, 1e-15));
  const auto g1 = immortal_prefix_law(kGeo, 1);
  for (std::uint32_t k = 1; k < 10; ++k) {
    std::vector<std::uint32_t> star{k};
    star.resize(k + 1, 0);
    CHECK(close(g1.at(PlaneTree::from_preorder(star)), k * std::ldexp(1.0, -int(k) - 1), 1e-14));
  }
  const auto s2 = immortal_prefix_law(kSub, 2);
  CHECK(close(s2.at(PlaneTree::parse("1 1 0")), 1.0, 1e-15));
  for (std::size_t b = 1; b <= 4; ++b) {
    const auto law = immortal_prefix_law(kBin, b);
    CHECK(close(law.total() + law.deficiency, 1.0, 1e-10));
    // E[Y_b] = mu^b.
    const auto gw = gw_prefix_law(kBin, b);
    double m = 0.0;
    for (const auto& [t, q] : gw.prob) m += generation_size(t, b) * q;
    CHECK(close(m, 1.0, 1e-10));
  }
}

TEST_CASE("conditioned prefix laws") {
  const auto h = conditioned_prefix_law(kBin, FunctionalTag::height(), Conditioning::tail(3), 1);
  CHECK(close(h.at(PlaneTree::parse("2 0 0")), 1.0, 1e-14));
  // P[r_1 = one-child star | H > 1] with q_n = n/(n+1).
  const ConditionedLaw g(kGeo, FunctionalTag::height(), Conditioning::tail(1), 1);
  CHECK(close(g.prob(PlaneTree::parse("1 0")), 3.0 / 8, 1e-13));
  const auto pr = conditioned_prefix_law(kBin, FunctionalTag::total_progeny(), Conditioning::point(3), 1);
  CHECK(close(pr.at(PlaneTree::parse("2 0 0")), 1.0, 1e-14));
  CHECK_THROWS_AS(ConditionedLaw(kBin, FunctionalTag::total_progeny(), Conditioning::point(4), 1),
                  ZeroProbabilityEvent);
  EnumerationOptions eo;
  eo.prune_below = 1e-9;
  for (const auto& f : {FunctionalTag::height(), FunctionalTag::width(), FunctionalTag::max_out_degree(),
                        FunctionalTag::total_progeny(), FunctionalTag::count_in_set(DegreeSet::of({0}))}) {
    const auto law = conditioned_prefix_law(kGeo, f, Conditioning::tail(4), 2, eo);
    CHECK(close(law.total() + law.deficiency, 1.0, 1e-9));
  }
}

TEST_CASE("conditioned laws agree with brute-force conditioning") {
  // Enumerate whole trees up to 14 nodes, condition on H > 2 or L = 7 and
  // restrict to height 1; exact only up to the enumerated residual.
  const std::size_t cap = 14;
  std::map<PlaneTree, double> h_law, l_law;
  double h_mass = 0.0, l_mass = 0.0, enumerated = 0.0;
  oracle::for_each_tree(kBin, cap, [&](const std::vector<std::uint32_t>& seq, double prob) {
    enumerated += prob;
    const auto st = oracle::tree_stats(seq);
    const auto r1 = restrict_height(PlaneTree::from_preorder(seq), 1);
    if (st.nodes == 7) {
      l_law[r1] += prob;
      l_mass += prob;
    }
    if (st.height > 2) {
      h_law[r1] += prob;
      h_mass += prob;
    }
  });
  const auto exact_l = conditioned_prefix_law(kBin, FunctionalTag::total_progeny(), Conditioning::point(7), 1);
  for (const auto& [t, q] : l_law) CHECK(close(exact_l.at(t), q / l_mass, 1e-12));
  const ConditionedLaw exact_h(kBin, FunctionalTag::height(), Conditioning::tail(2), 1);
  // Trees with H > 2 and more than 14 nodes are missing from h_mass.
  const double missing = exact_h.event_probability() - h_mass;
  CHECK(missing >= -1e-15);
  CHECK(missing <= 1.0 - enumerated + 1e-15);
}

TEST_CASE("tv distance") {
  PrefixLaw a{1, {{PlaneTree::parse("2 0 0"), 1.0}}, 0.0};
  PrefixLaw b{1, {{PlaneTree::parse("1 0"), 1.0}}, 0.0};
  PrefixLaw c{1, {{PlaneTree::parse("2 0 0"), 0.5}, {PlaneTree::parse("1 0"), 0.5}}, 0.0};
  CHECK(tv_distance(a, a) == 0.0);
  CHECK(tv_distance(a, b) == 1.0);
  CHECK(tv_distance(c, a) == 0.5);
  PrefixLaw d{2, {}, 0.0};
  CHECK_THROWS(tv_distance(a, d));
}

TEST_CASE("enumeration") {
  CHECK(enumerate_trees(DegreeSet::of({0, 2}), 2, 100, 3).size() == 2);
  CHECK(enumerate_trees(DegreeSet::all(), 2, 1, 1000).size() == 3);
  CHECK(enumerate_trees(DegreeSet::all(), 1, 2, 1000).size() == 3);
  const auto ts = enumerate_trees(DegreeSet::all(), 3, 3, 7);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i - 1] < ts[i]);
  CHECK_THROWS_AS(enumerate_trees(DegreeSet::all(), 3, 10, 30, 1000), BudgetExceeded);
}

TEST_CASE("oracle equivalence up to n = 8") {
  for (const auto* p : {&kBin, &kGeo}) {
    const std::size_t N = 8;
    const auto ht = height_tail(*p, N);
    const auto hq = oracle::height_cdf_iteration(*p, N);
    const auto mt = maxdeg_tail(*p, N);
    const auto pt = progeny_pmf(*p, N);
    const auto ct = count_in_set_pmf(*p, DegreeSet::of({0}), N);
    const auto leaves = oracle::leaf_count_pmf_series(*p, N);
    const auto brute = oracle::brute_force_tables(*p, 12, N);
    for (std::size_t n = 0; n <= N; ++n) {
      CHECK(close(1.0 - ht.tail[n], hq[n], 1e-10));
      CHECK(close(1.0 - mt.tail[n], oracle::maxdeg_cdf_iteration(*p, n), 1e-10));
      if (n >= 1) CHECK(close(width_cdf(*p, 1, n), oracle::width_cdf_gauss_seidel(*p, n), 1e-10));
      CHECK(close(ct.point[n], leaves[n], 1e-10));
      // Brute force over <= 12 nodes brackets each point mass.
      CHECK(brute.height[n] <= ht.point[n] + 1e-12);
      CHECK(ht.point[n] <= brute.height[n] + brute.residual + 1e-12);
      CHECK(brute.leaves[n] <= ct.point[n] + 1e-12);
      CHECK(ct.point[n] <= brute.leaves[n] + brute.residual + 1e-12);
      CHECK(close(pt.point[n], brute.progeny[n], 1e-12));
    }
  }
}

TEST_CASE("max-type forest point masses two ways") {
  for (const auto& t : {height_tail(kGeo, 30, {2, 3}), maxdeg_tail(kGeo, 30, {2, 3})}) {
    for (std::size_t k : {2, 3}) {
      const auto mc = max_convolution_point(t.tail, t.point, k);
      for (std::size_t n = 1; n < t.size(); ++n) {
        const double closed = std::pow(1 - t.tail[n], k) - std::pow(1 - t.tail[n - 1], k);
        CHECK(close(mc[n], closed, 1e-15));
        CHECK(close(t.forest_point.at(k)[n], closed, 1e-15));
      }
    }
  }
}

TEST_CASE("empirical tv accounts for unsampled atoms") {
  std::map<PlaneTree, std::size_t> counts{{PlaneTree::parse("2 0 0"), 3}, {PlaneTree::parse("0"), 1}};
  const auto exact = [](const PlaneTree& t) { return t.size() == 1 ? 0.5 : (t.size() == 3 ? 0.25 : 0.0); };
  // |0.75-0.25| + |0.25-0.5| + unsampled 0.25 = 1.0, halved.
  CHECK(tv_empirical(counts, 4, exact) == Approx(0.5));
}

TEST_CASE("csv output") {
  const auto t = height_tail(kBin, 2, {2});
  const auto s = t.to_csv();
  CHECK(s.rfind("n,v_n,v_point_n,v_n_2,v_point_n_2\r\n", 0) == 0);
}
