#pragma once

// Slow reference computations, written independently of the exact engine.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "branchlim/offspring.hpp"
#include "branchlim/tree.hpp"

namespace branchlim::oracle {

/// Every plane tree with at most max_nodes nodes whose out-degrees have
/// p_k > 0, visited as a preorder degree sequence with its probability.
void for_each_tree(const OffspringDist& p, std::size_t max_nodes,
                   const std::function<void(const std::vector<std::uint32_t>&, double)>& visit);

struct TreeStats {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t max_degree = 0;
  std::size_t leaves = 0;
  std::size_t nodes = 0;
};

/// Functionals of a preorder degree sequence, computed with an explicit stack.
TreeStats tree_stats(const std::vector<std::uint32_t>& preorder);

/// Point masses P[A = n] for n <= n_max restricted to trees with at most
/// max_nodes nodes, plus the mass of all larger trees.
struct BruteTables {
  std::vector<double> height, width, max_degree, leaves, progeny;
  double residual = 0.0;  // P[L > max_nodes]
  std::size_t trees = 0;
};

BruteTables brute_force_tables(const OffspringDist& p, std::size_t max_nodes, std::size_t n_max);

/// P[H <= n] by q_0 = p_0, q_{m+1} = f(q_m).
std::vector<double> height_cdf_iteration(const OffspringDist& p, std::size_t n_max);

/// P[M <= n] by monotone iteration s <- sum_{k <= n} p_k s^k from 0.
double maxdeg_cdf_iteration(const OffspringDist& p, std::size_t n, double tol = 1e-16,
                            std::size_t max_iter = 100'000'000);

/// P[W(tau) <= n] by Gauss-Seidel sweeps on the population chain killed above n.
double width_cdf_gauss_seidel(const OffspringDist& p, std::size_t n, double tol = 1e-16,
                              std::size_t max_sweeps = 10'000'000);

/// P[#leaves = m] for m <= n_max from the power series T(z) = sum_k p_k z^{[k=0]} T(z)^k.
std::vector<double> leaf_count_pmf_series(const OffspringDist& p, std::size_t n_max, double tol = 1e-16,
                                          std::size_t max_iter = 1'000'000);

}  // namespace branchlim::oracle
