#include <algorithm>
#include <numeric>

#include "branchlim/offspring.hpp"
#include "branchlim/rng.hpp"
#include "branchlim/samplers.hpp"
#include "branchlim/tree.hpp"
#include "doctest.h"

using namespace branchlim;

namespace {

// t0 = {root, 1, 2, 21}.
PlaneTree t0() { return PlaneTree::parse("2 0 1 0"); }

std::vector<PlaneTree> random_trees(std::size_t n, std::uint64_t seed) {
  const auto p = OffspringDist::geometric(0.5, 40);
  Rng base(seed);
  std::vector<PlaneTree> out;
  for (std::size_t i = 0; out.size() < n; ++i) {
    Rng r = base.split(i);
    if (auto t = sample_gw(p, r, 5000)) out.push_back(*t);
  }
  return out;
}

}  // namespace

TEST_CASE("serialization and label round trip") {
  const auto t = t0();
  CHECK(t.to_string() == "2 0 1 0");
  CHECK(t.size() == 4);
  const std::vector<Label> labels{{}, {1}, {2}, {2, 1}};
  CHECK(PlaneTree::from_labels(labels) == t);
  CHECK(t.labels() == labels);
  CHECK(PlaneTree::from_level_order(std::vector<std::uint32_t>{2, 0, 1, 0}) == t);
  CHECK_THROWS_AS(PlaneTree::from_preorder({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(PlaneTree::from_preorder({0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(PlaneTree::from_labels({{}, {2}}), std::invalid_argument);
  CHECK_THROWS_AS(PlaneTree::from_labels({{}, {1, 1}}), std::invalid_argument);
}

TEST_CASE("generation_size") {
  const auto t = t0();
  CHECK(generation_size(t, 1) == 2);
  CHECK(generation_size(t, 0) == 1);
  CHECK(generation_size(t, 3) == 0);
  CHECK(generation_size(PlaneTree{}, 0) == 1);
}

TEST_CASE("functionals of t0 and the single node") {
  const auto t = t0();
  CHECK(functional(t, FunctionalTag::height()) == 2);
  CHECK(functional(t, FunctionalTag::width()) == 2);
  CHECK(functional(t, FunctionalTag::max_out_degree()) == 2);
  CHECK(functional(t, FunctionalTag::count_in_set(DegreeSet::of({0}))) == 2);
  CHECK(functional(t, FunctionalTag::total_progeny()) == 4);
  const PlaneTree one;
  CHECK(functional(one, FunctionalTag::height()) == 0);
  CHECK(functional(one, FunctionalTag::width()) == 1);
  CHECK(functional(one, FunctionalTag::max_out_degree()) == 0);
  CHECK(functional(one, FunctionalTag::total_progeny()) == 1);
  CHECK(functional(Forest{}, FunctionalTag::width()) == 0);
}

TEST_CASE("restrict") {
  const auto t = t0();
  CHECK(restrict_height(t, 1).to_string() == "2 0 0");
  CHECK(restrict_height(t, 5) == t);
  CHECK(restrict_height(t, 0) == PlaneTree{});
  for (const auto& s : random_trees(200, 11))
    for (std::size_t g = 0; g < 5; ++g)
      for (std::size_t h = 0; h < 5; ++h)
        CHECK(restrict_height(restrict_height(s, g), h) == restrict_height(s, std::min(g, h)));
}

TEST_CASE("subtrees_above") {
  const auto t = t0();
  const auto f1 = subtrees_above(t, 1);
  REQUIRE(f1.size() == 2);
  CHECK(f1.trees[0].to_string() == "0");
  CHECK(f1.trees[1].to_string() == "1 0");
  const auto f2 = subtrees_above(t, 2);
  REQUIRE(f2.size() == 1);
  CHECK(f2.trees[0] == PlaneTree{});
  CHECK(subtrees_above(t, 3).empty());
}

TEST_CASE("ultrametric distance") {
  const auto t = t0();
  CHECK(ultrametric_distance(t, t) == 0.0);
  CHECK(ultrametric_distance(PlaneTree{}, PlaneTree::parse("1 0")) == 1.0);
  CHECK(ultrametric_distance(t, PlaneTree::parse("2 0 0")) == 0.5);
  const auto trees = random_trees(60, 5);
  for (std::size_t i = 0; i + 2 < trees.size(); ++i) {
    const auto &a = trees[i], &b = trees[i + 1], &c = trees[i + 2];
    CHECK(ultrametric_distance(a, c) <= std::max(ultrametric_distance(a, b), ultrametric_distance(b, c)));
  }
}

TEST_CASE("generation sums, monotonicity and additivity on random trees") {
  const std::vector<FunctionalTag> tags{FunctionalTag::height(), FunctionalTag::width(),
                                        FunctionalTag::max_out_degree(),
                                        FunctionalTag::count_in_set(DegreeSet::of({0})),
                                        FunctionalTag::total_progeny()};
  for (const auto& t : random_trees(300, 7)) {
    const auto g = generation_sizes(t);
    CHECK(std::accumulate(g.begin(), g.end(), std::size_t{0}) == t.size());
    const std::size_t H = functional(t, FunctionalTag::height());
    for (std::size_t b = 1; b <= H + 1; ++b) {
      const auto f = subtrees_above(t, b);
      CHECK(f.size() == generation_size(t, b));
      for (const auto& s : f.trees)
        for (const auto& tag : tags) CHECK(functional(s, tag) <= functional(t, tag));
      std::size_t below = 0;
      for (std::size_t h = 0; h < b && h < g.size(); ++h) below += g[h];
      CHECK(t.size() == functional(f, FunctionalTag::total_progeny()) + below);
      if (!f.empty()) CHECK(H == b + functional(f, FunctionalTag::height()));
    }
  }
}

TEST_CASE("degree sets and tags parse") {
  CHECK(DegreeSet::parse("all") == DegreeSet::all());
  CHECK(DegreeSet::parse("{0,2}") == DegreeSet::of({0, 2}));
  const auto ex = DegreeSet::parse("all\\{1}");
  CHECK(ex.contains(0));
  CHECK_FALSE(ex.contains(1));
  CHECK(ex.contains(1000000));
  CHECK(FunctionalTag::parse(FunctionalTag::width().name()) == FunctionalTag::width());
}
