#include "branchlim/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace branchlim::oracle {

void for_each_tree(const OffspringDist& p, std::size_t max_nodes,
                   const std::function<void(const std::vector<std::uint32_t>&, double)>& visit) {
  std::vector<std::uint32_t> degs;
  for (std::size_t k = 0; k <= p.max_degree(); ++k)
    if (p[k] > 0.0) degs.push_back(static_cast<std::uint32_t>(k));
  std::vector<std::uint32_t> seq;
  // open = nodes promised by earlier degrees but not yet placed.
  std::function<void(std::size_t, double)> rec = [&](std::size_t open, double prob) {
    if (open == 0) {
      visit(seq, prob);
      return;
    }
    for (std::uint32_t d : degs) {
      const std::size_t next_open = open - 1 + d;
      if (seq.size() + 1 + next_open > max_nodes) break;
      seq.push_back(d);
      rec(next_open, prob * p[d]);
      seq.pop_back();
    }
  };
  rec(1, 1.0);
}

TreeStats tree_stats(const std::vector<std::uint32_t>& preorder) {
  TreeStats s;
  s.nodes = preorder.size();
  std::vector<std::size_t> per_level;
  // Stack of remaining child counts; depth of the next node is its size.
  std::vector<std::uint32_t> pending;
  for (std::uint32_t d : preorder) {
    const std::size_t depth = pending.size();
    if (per_level.size() <= depth) per_level.resize(depth + 1, 0);
    ++per_level[depth];
    s.height = std::max(s.height, depth);
    s.max_degree = std::max<std::size_t>(s.max_degree, d);
    if (d == 0) ++s.leaves;
    if (!pending.empty()) --pending.back();
    if (d > 0) {
      pending.push_back(d);
    } else {
      while (!pending.empty() && pending.back() == 0) pending.pop_back();
    }
  }
  s.width = *std::max_element(per_level.begin(), per_level.end());
  return s;
}

BruteTables brute_force_tables(const OffspringDist& p, std::size_t max_nodes, std::size_t n_max) {
  BruteTables t;
  for (auto* v : {&t.height, &t.width, &t.max_degree, &t.leaves, &t.progeny}) v->assign(n_max + 1, 0.0);
  double total = 0.0;
  auto add = [&](std::vector<double>& v, std::size_t n, double pr) {
    if (n <= n_max) v[n] += pr;
  };
  for_each_tree(p, max_nodes, [&](const std::vector<std::uint32_t>& seq, double pr) {
    const TreeStats s = tree_stats(seq);
    add(t.height, s.height, pr);
    add(t.width, s.width, pr);
    add(t.max_degree, s.max_degree, pr);
    add(t.leaves, s.leaves, pr);
    add(t.progeny, s.nodes, pr);
    total += pr;
    ++t.trees;
  });
  t.residual = std::max(0.0, 1.0 - total);
  return t;
}

std::vector<double> height_cdf_iteration(const OffspringDist& p, std::size_t n_max) {
  std::vector<double> q(n_max + 1);
  q[0] = p[0];
  for (std::size_t m = 1; m <= n_max; ++m) q[m] = p.pgf(q[m - 1]);
  return q;
}

double maxdeg_cdf_iteration(const OffspringDist& p, std::size_t n, double tol, std::size_t max_iter) {
  // Every tree has M <= max_degree; the iteration would converge only like 1/k there.
  if (n >= p.max_degree()) return 1.0;
  double s = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    double next = 0.0;
    for (std::size_t k = std::min(n, p.max_degree()) + 1; k-- > 0;) next = next * s + p[k];
    if (std::abs(next - s) <= tol) return next;
    s = next;
  }
  throw std::runtime_error("maxdeg_cdf_iteration did not converge");
}

double width_cdf_gauss_seidel(const OffspringDist& p, std::size_t n, double tol, std::size_t max_sweeps) {
  if (n == 0) return 0.0;
  // P(k -> j) is the k-fold convolution of p, truncated at n.
  std::vector<std::vector<double>> P(n + 1);
  P[0].assign(n + 1, 0.0);
  P[0][0] = 1.0;
  for (std::size_t k = 1; k <= n; ++k) {
    P[k].assign(n + 1, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t d = 0; d <= p.max_degree() && i + d <= n; ++d) P[k][i + d] += P[k - 1][i] * p[d];
  }
  std::vector<double> a(n + 1, 0.0);
  a[0] = 1.0;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      double v = 0.0;
      for (std::size_t j = 0; j <= n; ++j) v += P[k][j] * a[j];
      change = std::max(change, std::abs(v - a[k]));
      a[k] = v;
    }
    if (change <= tol) return a[1];
  }
  throw std::runtime_error("width_cdf_gauss_seidel did not converge");
}

namespace {

std::vector<double> series_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; i + j < a.size(); ++j) c[i + j] += a[i] * b[j];
  return c;
}

}  // namespace

std::vector<double> leaf_count_pmf_series(const OffspringDist& p, std::size_t n_max, double tol,
                                          std::size_t max_iter) {
  const std::size_t len = n_max + 1;
  std::vector<double> T(len, 0.0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Horner in T: sum_{k >= 1} p_k T^k, then the leaf term p_0 z.
    std::vector<double> acc(len, 0.0);
    for (std::size_t k = p.max_degree(); k >= 1; --k) {
      acc = series_mul(acc, T);
      acc[0] += p[k];
    }
    acc = series_mul(acc, T);
    if (len > 1) acc[1] += p[0];
    double change = 0.0;
    for (std::size_t i = 0; i < len; ++i) change = std::max(change, std::abs(acc[i] - T[i]));
    T = std::move(acc);
    if (change <= tol) return T;
  }
  throw std::runtime_error("leaf_count_pmf_series did not converge");
}

}  // namespace branchlim::oracle
