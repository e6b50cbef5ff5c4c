#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "branchlim/exact_law.hpp"
#include "branchlim/offspring.hpp"
#include "branchlim/rng.hpp"
#include "branchlim/tree.hpp"

namespace branchlim {

inline constexpr std::size_t kDefaultNodeCap = 10'000'000;

/// Breadth-first GW tree; nullopt when more than node_cap nodes would be
/// created.
std::optional<PlaneTree> sample_gw(const OffspringDist& p, Rng& rng, std::size_t node_cap = kDefaultNodeCap);

/// r_h(tau): nodes at height h are not given offspring.
PlaneTree sample_gw_prefix(const OffspringDist& p, Rng& rng, std::size_t h);

/// r_b(tau*) by the spine construction. p_hat must be p.size_biased().
PlaneTree sample_immortal_prefix(const OffspringDist& p, const OffspringDist& p_hat, Rng& rng, std::size_t b);
PlaneTree sample_immortal_prefix(const OffspringDist& p, Rng& rng, std::size_t b);

std::optional<Forest> sample_forest(const OffspringDist& p, std::size_t k, Rng& rng,
                                    std::size_t node_cap = kDefaultNodeCap);

struct RejectionBudget {
  std::size_t max_attempts = 100'000'000;
  std::size_t node_cap = kDefaultNodeCap;
  /// Skip the exact zero-mass check (callers that already ran it once).
  bool skip_exact_check = false;
};

struct ConditionedSample {
  std::optional<PlaneTree> tree;  // empty when the budget ran out
  std::size_t attempts = 0;
  std::size_t overflows = 0;  // attempts that hit node_cap, counted as rejected
  bool exhausted = false;
  /// Set when the event was found to have probability zero before sampling.
  bool zero_mass = false;
};

/// Whether A(t) satisfies the conditioning event.
bool satisfies(const PlaneTree& t, const FunctionalTag& f, const Conditioning& cond);

/// Exact check that the event has positive probability. Laws with more than
/// `exact_support_limit` atoms only get the cheap lattice checks.
bool event_possible(const OffspringDist& p, const FunctionalTag& f, const Conditioning& cond,
                    std::size_t exact_support_limit = 4096);

/// Rejection sampling from the GW law given the event.
ConditionedSample sample_conditioned(const OffspringDist& p, const FunctionalTag& f, const Conditioning& cond,
                                     Rng& rng, const RejectionBudget& budget = {});

/// Rejection sampling of r_b(tau) given the event. Trees are grown one
/// generation at a time and abandoned as soon as the event is decided, then
/// completed up to height b only; the law of the prefix is unchanged.
ConditionedSample sample_conditioned_prefix(const OffspringDist& p, const FunctionalTag& f,
                                            const Conditioning& cond, std::size_t b, Rng& rng,
                                            const RejectionBudget& budget = {});

/// Header comment lines then one preorder string per tree.
void write_dump(std::ostream& os, const std::vector<std::string>& header, const std::vector<PlaneTree>& trees);

}  // namespace branchlim
