#include "branchlim/samplers.hpp"

#include <numeric>

namespace branchlim {

std::optional<PlaneTree> sample_gw(const OffspringDist& p, Rng& rng, std::size_t node_cap) {
  if (node_cap < 1) throw std::invalid_argument("node_cap must be >= 1");
  std::vector<std::uint32_t> level_order;
  std::size_t total = 1;
  for (std::size_t i = 0; i < total; ++i) {
    const auto k = p.draw(rng.uniform());
    total += k;
    if (total > node_cap) return std::nullopt;
    level_order.push_back(k);
  }
  return PlaneTree::from_level_order(level_order);
}

PlaneTree sample_gw_prefix(const OffspringDist& p, Rng& rng, std::size_t h) {
  // Level order with generation boundaries; the last generation is childless.
  std::vector<std::uint32_t> level_order;
  std::size_t gen_begin = 0, gen_end = 1, depth = 0;
  while (gen_begin < gen_end) {
    std::size_t next_size = 0;
    for (std::size_t i = gen_begin; i < gen_end; ++i) {
      const std::uint32_t k = depth < h ? p.draw(rng.uniform()) : 0;
      level_order.push_back(k);
      next_size += k;
    }
    gen_begin = gen_end;
    gen_end += next_size;
    ++depth;
  }
  return PlaneTree::from_level_order(level_order);
}

namespace {

void grow_normal(const OffspringDist& p, Rng& rng, std::size_t depth, std::size_t b, std::vector<std::uint32_t>& out) {
  if (depth == b) {
    out.push_back(0);
    return;
  }
  const auto k = p.draw(rng.uniform());
  out.push_back(k);
  for (std::uint32_t c = 0; c < k; ++c) grow_normal(p, rng, depth + 1, b, out);
}

}  // namespace

PlaneTree sample_immortal_prefix(const OffspringDist& p, const OffspringDist& p_hat, Rng& rng, std::size_t b) {
  if (p.mean() > 1.0 + 1e-12) throw std::invalid_argument("immortal tree needs mu <= 1");
  std::vector<std::uint32_t> pre;
  // Walk down the spine in preorder: normal siblings left of the special
  // child are emitted before descending, those to the right afterwards.
  std::vector<std::uint32_t> right_counts;
  for (std::size_t depth = 0; depth < b; ++depth) {
    const auto k = p_hat.draw(rng.uniform());
    pre.push_back(k);
    auto j = static_cast<std::uint32_t>(rng.uniform() * k);
    if (j >= k) j = k - 1;
    for (std::uint32_t c = 0; c < j; ++c) grow_normal(p, rng, depth + 1, b, pre);
    right_counts.push_back(k - 1 - j);
    // Right siblings must follow the spine subtree in preorder, so they are
    // generated after the recursion below returns.
  }
  pre.push_back(0);  // spine node at height b
  // Right siblings, deepest first, each grown from its own depth.
  for (std::size_t depth = b; depth-- > 0;) {
    for (std::uint32_t c = 0; c < right_counts[depth]; ++c) grow_normal(p, rng, depth + 1, b, pre);
  }
  return PlaneTree::from_preorder(std::move(pre));
}

PlaneTree sample_immortal_prefix(const OffspringDist& p, Rng& rng, std::size_t b) {
  return sample_immortal_prefix(p, p.size_biased(), rng, b);
}

std::optional<Forest> sample_forest(const OffspringDist& p, std::size_t k, Rng& rng, std::size_t node_cap) {
  if (k < 1) throw std::invalid_argument("forest needs k >= 1");
  Forest f;
  f.trees.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto t = sample_gw(p, rng, node_cap);
    if (!t) return std::nullopt;
    f.trees.push_back(std::move(*t));
  }
  return f;
}

bool satisfies(const PlaneTree& t, const FunctionalTag& f, const Conditioning& cond) {
  const std::size_t a = functional(t, f);
  return cond.kind == Conditioning::Kind::Tail ? a > cond.n : a == cond.n;
}

bool event_possible(const OffspringDist& p, const FunctionalTag& f, const Conditioning& cond,
                    std::size_t exact_support_limit) {
  using K = FunctionalTag::Kind;
  const bool point = cond.kind == Conditioning::Kind::Point;
  if (point && f.kind == K::MaxOutDegree) return cond.n < p.pmf().size() && p[cond.n] > 0.0;
  if (point && f.kind == K::TotalProgeny) {
    // L - 1 = sum_u k_u, and every k_u is congruent to s0 modulo the gcd g
    // of support differences, so (L - 1) - L s0 must vanish mod g.
    if (cond.n == 0) return false;
    std::int64_t s0 = -1, g = 0;
    for (std::size_t k = 0; k < p.pmf().size(); ++k) {
      if (p[k] <= 0.0) continue;
      if (s0 < 0) s0 = static_cast<std::int64_t>(k);
      else g = std::gcd(g, static_cast<std::int64_t>(k) - s0);
    }
    const auto n = static_cast<std::int64_t>(cond.n);
    const std::int64_t r = (n - 1) - n * s0;
    if (g == 0 ? r != 0 : r % g != 0) return false;
  }
  if (point && f.kind == K::Width && cond.n == 0) return false;
  if (p.pmf().size() > exact_support_limit) return true;
  try {
    ConditionedLaw law(p, f, cond, 0);
    return law.event_probability() > 0.0;
  } catch (const ZeroProbabilityEvent&) {
    return false;
  } catch (const std::invalid_argument&) {
    return true;  // no exact route for this law; let sampling decide
  } catch (const BudgetExceeded&) {
    return true;
  }
}

ConditionedSample sample_conditioned(const OffspringDist& p, const FunctionalTag& f, const Conditioning& cond,
                                     Rng& rng, const RejectionBudget& budget) {
  ConditionedSample out;
  if (!budget.skip_exact_check && !event_possible(p, f, cond)) {
    out.exhausted = true;
    out.zero_mass = true;
    return out;
  }
  while (out.attempts < budget.max_attempts) {
    ++out.attempts;
    auto t = sample_gw(p, rng, budget.node_cap);
    if (!t) {
      ++out.overflows;
      continue;
    }
    if (satisfies(*t, f, cond)) {
      out.tree = std::move(t);
      return out;
    }
  }
  out.exhausted = true;
  return out;
}

namespace {

enum class Verdict { Undecided, Accept, Reject };

// Running statistics of a tree grown generation by generation.
struct GrowthStats {
  std::size_t total = 1;
  std::size_t max_degree = 0;
  std::size_t count = 0;
  std::size_t max_generation = 1;
  std::size_t height = 0;
};

// Decision once the generation at `depth` has been drawn (its children counted).
Verdict decide(const GrowthStats& s, const FunctionalTag& f, const Conditioning& cond, bool extinct) {
  using K = FunctionalTag::Kind;
  const std::size_t n = cond.n;
  const bool tail = cond.kind == Conditioning::Kind::Tail;
  std::size_t value = 0;
  bool final_value = extinct;
  switch (f.kind) {
    case K::Height: value = s.height; break;
    case K::Width: value = s.max_generation; break;
    case K::MaxOutDegree: value = s.max_degree; break;
    case K::TotalProgeny: value = s.total; break;
    case K::CountInSet: value = s.count; break;
  }
  // Every statistic is nondecreasing as the tree grows.
  if (value > n) return tail ? Verdict::Accept : Verdict::Reject;
  if (!final_value) return Verdict::Undecided;
  if (tail) return Verdict::Reject;
  return value == n ? Verdict::Accept : Verdict::Reject;
}

}  // namespace

ConditionedSample sample_conditioned_prefix(const OffspringDist& p, const FunctionalTag& f,
                                            const Conditioning& cond, std::size_t b, Rng& rng,
                                            const RejectionBudget& budget) {
  ConditionedSample out;
  if (!budget.skip_exact_check && !event_possible(p, f, cond)) {
    out.exhausted = true;
    out.zero_mass = true;
    return out;
  }
  std::vector<std::uint32_t> prefix;
  while (out.attempts < budget.max_attempts) {
    ++out.attempts;
    prefix.clear();
    GrowthStats s;
    std::size_t gen = 1, depth = 0;
    Verdict v = Verdict::Undecided;
    bool overflow = false;
    // Grow until the event is decided and the prefix reaches height b.
    while (gen > 0 && (v == Verdict::Undecided || depth < b)) {
      std::size_t next = 0;
      for (std::size_t i = 0; i < gen; ++i) {
        const auto k = p.draw(rng.uniform());
        next += k;
        if (depth < b) prefix.push_back(k);
        if (v == Verdict::Undecided) {
          s.max_degree = std::max<std::size_t>(s.max_degree, k);
          if (f.kind == FunctionalTag::Kind::CountInSet && f.set.contains(k)) ++s.count;
        }
      }
      if (v == Verdict::Undecided) {
        s.total += next;
        s.max_generation = std::max(s.max_generation, next);
        if (next > 0) s.height = depth + 1;
        if (s.total > budget.node_cap) {
          overflow = true;
          break;
        }
        v = decide(s, f, cond, next == 0);
        if (v == Verdict::Reject) break;
      }
      gen = next;
      ++depth;
    }
    if (overflow) {
      ++out.overflows;
      continue;
    }
    if (v != Verdict::Accept) continue;
    // Nodes at height b are leaves of the prefix.
    std::size_t need = 1;
    for (std::size_t i = 0; i < prefix.size(); ++i) need += prefix[i];
    prefix.resize(need, 0);
    out.tree = PlaneTree::from_level_order(prefix);
    return out;
  }
  out.exhausted = true;
  return out;
}

void write_dump(std::ostream& os, const std::vector<std::string>& header, const std::vector<PlaneTree>& trees) {
  for (const auto& h : header) os << "# " << h << '\n';
  for (const auto& t : trees) os << t.to_string() << '\n';
}

}  // namespace branchlim
