#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "branchlim/offspring.hpp"
#include "branchlim/tree.hpp"

namespace branchlim {

/// Raised when an iteration or enumeration exceeds its configured budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a conditioning event has exact probability zero.
class ZeroProbabilityEvent : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// v_n = P[A > n] and v_(n) = P[A = n] for n = 0..N, with optional forest
/// columns for k independent trees.
struct TailTable {
  FunctionalTag functional;
  std::vector<double> tail;
  std::vector<double> point;
  std::map<std::size_t, std::vector<double>> forest_tail;
  std::map<std::size_t, std::vector<double>> forest_point;
  double truncation_mass = 0.0;

  std::size_t size() const { return tail.size(); }
  /// Columns n, v_n, v_point_n, then v_n_k, v_point_n_k for each k.
  std::string to_csv() const;
};

struct ExactOptions {
  double tol = 1e-14;
  std::size_t max_iterations = 10'000'000;
  /// Upper bound on multiply-adds spent in convolution-power tables.
  double convolution_budget = 4e9;
};

TailTable height_tail(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks = {},
                      const ExactOptions& opt = {});
TailTable maxdeg_tail(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks = {},
                      const ExactOptions& opt = {});
/// Dwass route; forest column k holds P[L(tau^(k)) = n] = (k/n) P[S_n = n - k].
TailTable progeny_pmf(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks = {},
                      const ExactOptions& opt = {});
TailTable width_table(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks = {},
                      const ExactOptions& opt = {});
TailTable count_in_set_pmf(const OffspringDist& p, const DegreeSet& A, std::size_t N,
                           const std::vector<std::size_t>& ks = {}, const ExactOptions& opt = {});
/// Dispatch on the functional kind.
TailTable tail_table(const OffspringDist& p, const FunctionalTag& f, std::size_t N,
                     const std::vector<std::size_t>& ks = {}, const ExactOptions& opt = {});

/// Least fixed point of s -> sum_{k <= n} p_k s^k, i.e. P[M(tau) <= n].
double maxdeg_cdf(const OffspringDist& p, std::size_t n, const ExactOptions& opt = {});

/// Absorption probabilities for the population chain killed above n.
/// cdf(k) = P[W(tau^(k)) <= n] for every 0 <= k, with cdf(0) = 1 and
/// cdf(k) = 0 for k > n.
class WidthCdf {
 public:
  WidthCdf(const OffspringDist& p, std::size_t n);
  double operator()(std::size_t k) const { return k == 0 ? 1.0 : (k <= n_ ? a_[k - 1] : 0.0); }
  std::size_t level() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> a_;
};

double width_cdf(const OffspringDist& p, std::size_t k, std::size_t n);

/// Rows (p^{*i})_j for i = 0..rows-1 and j = 0..cols-1.
std::vector<std::vector<double>> convolution_powers(const std::vector<double>& pmf, std::size_t rows,
                                                     std::size_t cols, double budget = 4e9);

/// Max-convolution route to P[max of k iid copies = n] from the one-tree
/// point and tail columns.
std::vector<double> max_convolution_point(const std::vector<double>& tail, const std::vector<double>& point,
                                          std::size_t k);

/// P[r_b(tau) = t]; throws std::invalid_argument if Height(t) > b.
double prefix_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b);

/// Finite probability table over trees of height <= h.
struct PrefixLaw {
  std::size_t height = 0;
  std::map<PlaneTree, double> prob;
  double deficiency = 0.0;

  double total() const;
  double at(const PlaneTree& t) const {
    auto it = prob.find(t);
    return it == prob.end() ? 0.0 : it->second;
  }
  /// Rows tree,probability in canonical tree order.
  std::string to_csv() const;
};

struct EnumerationOptions {
  /// Partial prefixes whose weight drops below this are dropped, with their
  /// exact mass moved to the deficiency.
  double prune_below = 1e-14;
  std::size_t max_trees = 5'000'000;
};

/// All trees of height <= h, out-degrees in `allowed` and <= maxdeg, and at
/// most node_cap nodes, in canonical (preorder-lexicographic) order.
std::vector<PlaneTree> enumerate_trees(const DegreeSet& allowed, std::size_t maxdeg, std::size_t h,
                                       std::size_t node_cap, std::size_t max_trees = 5'000'000);

/// Law of r_b(tau) by pruned enumeration.
PrefixLaw gw_prefix_law(const OffspringDist& p, std::size_t b, const EnumerationOptions& opt = {});

/// Law of r_b(tau*) as mu^{-b} Y_b(t) P[r_b(tau) = t]. The deficiency is the
/// exact weighted mass of pruned prefixes.
PrefixLaw immortal_prefix_law(const OffspringDist& p, std::size_t b, const EnumerationOptions& opt = {});

/// mu^{-b} Y_b(t) P[r_b(tau) = t] for a single prefix.
double immortal_prefix_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b);

struct Conditioning {
  enum class Kind { Tail, Point };
  Kind kind = Kind::Tail;
  std::size_t n = 0;

  static Conditioning tail(std::size_t n) { return {Kind::Tail, n}; }
  static Conditioning point(std::size_t n) { return {Kind::Point, n}; }
  std::string to_string() const;
  static Conditioning parse(std::string_view text);
};

/// Exact law of r_b(tau) given {A(tau) > n} or {A(tau) = n}.
class ConditionedLaw {
 public:
  ConditionedLaw(const OffspringDist& p, const FunctionalTag& f, Conditioning cond, std::size_t b,
                 const ExactOptions& opt = {});

  /// P[A(tau) in event].
  double event_probability() const { return normalizer_; }
  /// P[r_b(tau) = t | event].
  double prob(const PlaneTree& t) const;
  /// P[event | r_b(tau) = t].
  double event_given_prefix(const PlaneTree& t) const;

  PrefixLaw law(const EnumerationOptions& opt = {}) const;

 private:
  OffspringDist p_;
  FunctionalTag f_;
  Conditioning cond_;
  std::size_t b_;
  double normalizer_ = 0.0;
  // Height: w[m] = P[H >= m]. MaxOutDegree: cdf[m] = P[M <= m].
  std::vector<double> w_;
  std::vector<double> cdf_;
  std::optional<WidthCdf> width_n_, width_n1_;
  // Count functionals: forest pmf by k, each truncated at n.
  mutable std::map<std::size_t, std::vector<double>> forest_pmf_;
};

PrefixLaw conditioned_prefix_law(const OffspringDist& p, const FunctionalTag& f, Conditioning cond,
                                 std::size_t b, const EnumerationOptions& opt = {});

/// Upper bound 1/2 sum |a-b| + 1/2 (def_a + def_b); throws on height mismatch.
double tv_distance(const PrefixLaw& a, const PrefixLaw& b);

/// TV between an empirical law (counts over n draws) and an exact law given
/// pointwise. Atoms never sampled contribute their exact mass in aggregate,
/// so the full support need not be enumerated.
double tv_empirical(const std::map<PlaneTree, std::size_t>& counts, std::size_t n,
                    const std::function<double(const PlaneTree&)>& exact);

}  // namespace branchlim
