#include "branchlim/exact_law.hpp"

#include "branchlim/csv.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace branchlim {

namespace {

using csv::num;

// (1-v)^k computed without cancellation for small v.
double pow_complement(double v, std::size_t k) {
  if (k == 0) return 1.0;
  if (v >= 1.0) return 0.0;
  return std::exp(static_cast<double>(k) * std::log1p(-v));
}

void fill_forest_max_type(TailTable& t, const std::vector<std::size_t>& ks) {
  for (auto k : ks) {
    auto& ft = t.forest_tail[k];
    auto& fp = t.forest_point[k];
    ft.resize(t.size());
    fp.resize(t.size());
    double prev = 0.0;  // (1 - v_{-1})^k
    for (std::size_t n = 0; n < t.size(); ++n) {
      const double c = pow_complement(t.tail[n], k);
      ft[n] = k == 0 ? 0.0 : (t.tail[n] >= 1.0 ? 1.0 : -std::expm1(static_cast<double>(k) * std::log1p(-t.tail[n])));
      fp[n] = c - prev;
      prev = c;
    }
  }
}

std::vector<std::size_t> support_of(const OffspringDist& p) {
  std::vector<std::size_t> s;
  for (std::size_t k = 0; k < p.pmf().size(); ++k)
    if (p[k] > 0.0) s.push_back(k);
  return s;
}

// Least fixed point in [0,1] of g(s) = sum_k c_k s^k with c_k >= 0 and
// g(1) <= 1. g is convex, so Newton from 0 increases monotonically to it.
double least_fixed_point(const std::vector<double>& c, const ExactOptions& opt) {
  auto g = [&](double s) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * s + c[k];
    return acc;
  };
  auto dg = [&](double s) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 1;) acc = acc * s + static_cast<double>(k) * c[k];
    return acc;
  };
  double s = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const double h = g(s) - s;
    const double slope = 1.0 - dg(s);
    double next = slope > 1e-300 ? s + h / slope : g(s);
    // Newton overshoot is impossible in exact arithmetic; guard rounding and
    // the tangential (critical) case where plain iteration is used instead.
    if (!(next <= 1.0) || next < s) next = g(s);
    if (std::abs(next - s) <= opt.tol) return std::min(next, 1.0);
    s = next;
  }
  throw BudgetExceeded("fixed-point iteration did not converge");
}

}  // namespace

std::string TailTable::to_csv() const {
  std::ostringstream os;
  os << "n,v_n,v_point_n";
  for (const auto& [k, _] : forest_tail) os << ",v_n_" << k << ",v_point_n_" << k;
  os << "\r\n";
  for (std::size_t n = 0; n < size(); ++n) {
    os << n << ',' << num(tail[n]) << ',' << num(point[n]);
    for (const auto& [k, col] : forest_tail) os << ',' << num(col[n]) << ',' << num(forest_point.at(k)[n]);
    os << "\r\n";
  }
  return os.str();
}

TailTable height_tail(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks,
                      const ExactOptions&) {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  // w[m] = P[H >= m]; w[m+1] = sum_k p_k (1 - (1 - w[m])^k).
  std::vector<double> w(N + 2);
  w[0] = 1.0;
  w[1] = 1.0 - p[0];
  for (std::size_t m = 1; m + 1 < w.size(); ++m) {
    const double l = std::log1p(-w[m]);
    double acc = 0.0;
    for (std::size_t k = 1; k < p.pmf().size(); ++k) acc += p[k] * -std::expm1(static_cast<double>(k) * l);
    w[m + 1] = acc;
  }
  TailTable t;
  t.functional = FunctionalTag::height();
  t.truncation_mass = p.truncation_mass();
  t.tail.resize(N + 1);
  t.point.resize(N + 1);
  for (std::size_t n = 0; n <= N; ++n) {
    t.tail[n] = w[n + 1];
    t.point[n] = w[n] - w[n + 1];
  }
  fill_forest_max_type(t, ks);
  return t;
}

double maxdeg_cdf(const OffspringDist& p, std::size_t n, const ExactOptions& opt) {
  if (n >= p.max_degree() && p.mean() <= 1.0 + 1e-12) return 1.0;
  std::vector<double> c(p.pmf().begin(), p.pmf().begin() + static_cast<std::ptrdiff_t>(std::min(n + 1, p.pmf().size())));
  return least_fixed_point(c, opt);
}

TailTable maxdeg_tail(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks,
                      const ExactOptions& opt) {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  TailTable t;
  t.functional = FunctionalTag::max_out_degree();
  t.truncation_mass = p.truncation_mass();
  t.tail.resize(N + 1);
  t.point.resize(N + 1);
  double prev = 0.0;
  for (std::size_t n = 0; n <= N; ++n) {
    const double F = maxdeg_cdf(p, n, opt);
    t.tail[n] = 1.0 - F;
    t.point[n] = F - prev;
    prev = F;
  }
  fill_forest_max_type(t, ks);
  return t;
}

std::vector<std::vector<double>> convolution_powers(const std::vector<double>& pmf, std::size_t rows,
                                                     std::size_t cols, double budget) {
  const double cost = static_cast<double>(rows) * static_cast<double>(cols) *
                      static_cast<double>(std::min(pmf.size(), cols));
  if (cost > budget) throw BudgetExceeded("convolution table exceeds the configured budget");
  std::vector<std::vector<double>> out(rows, std::vector<double>(cols, 0.0));
  if (rows == 0 || cols == 0) return out;
  out[0][0] = 1.0;
  for (std::size_t i = 1; i < rows; ++i) {
    const auto& prev = out[i - 1];
    auto& cur = out[i];
    for (std::size_t j = 0; j < cols; ++j) {
      if (prev[j] == 0.0) continue;
      const std::size_t kmax = std::min(pmf.size(), cols - j);
      for (std::size_t k = 0; k < kmax; ++k) cur[j + k] += prev[j] * pmf[k];
    }
  }
  return out;
}

TailTable progeny_pmf(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks,
                      const ExactOptions& opt) {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  for (auto k : ks)
    if (k < 1 || k > N) throw std::invalid_argument("forest size k must satisfy 1 <= k <= N");
  const double cost = static_cast<double>(N) * static_cast<double>(N) *
                      static_cast<double>(std::min(p.pmf().size(), N));
  if (cost > opt.convolution_budget) throw BudgetExceeded("progeny table exceeds the convolution budget");
  TailTable t;
  t.functional = FunctionalTag::total_progeny();
  t.truncation_mass = p.truncation_mass();
  t.tail.assign(N + 1, 0.0);
  t.point.assign(N + 1, 0.0);
  for (auto k : ks) t.forest_point[k].assign(N + 1, 0.0), t.forest_tail[k].assign(N + 1, 0.0);
  // Streaming rows of p^{*m}, truncated at index N.
  std::vector<double> row(N, 0.0), next(N, 0.0);
  row[0] = 1.0;
  const auto& pmf = p.pmf();
  for (std::size_t m = 1; m <= N; ++m) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      if (row[j] == 0.0) continue;
      const std::size_t kmax = std::min(pmf.size(), N - j);
      for (std::size_t k = 0; k < kmax; ++k) next[j + k] += row[j] * pmf[k];
    }
    row.swap(next);
    const double mm = static_cast<double>(m);
    t.point[m] = row[m - 1] / mm;
    for (auto k : ks)
      if (k <= m) t.forest_point[k][m] = static_cast<double>(k) / mm * row[m - k];
  }
  auto tails = [](const std::vector<double>& pt, std::vector<double>& tl) {
    double cum = 0.0;
    for (std::size_t n = 0; n < pt.size(); ++n) {
      cum += pt[n];
      tl[n] = 1.0 - cum;
    }
  };
  tails(t.point, t.tail);
  for (auto k : ks) tails(t.forest_point[k], t.forest_tail[k]);
  return t;
}

WidthCdf::WidthCdf(const OffspringDist& p, std::size_t n) : n_(n) {
  if (n == 0) return;
  const auto pw = convolution_powers(p.pmf(), n + 1, n + 1);
  // (I - Q) a = r with Q(i,j) = (p^{*i})_j and r_i = (p^{*i})_0 for 1 <= i,j <= n.
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i <= n; ++i) {
    r(static_cast<Eigen::Index>(i - 1)) = pw[i][0];
    for (std::size_t j = 1; j <= n; ++j)
      A(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) -= pw[i][j];
  }
  const Eigen::VectorXd a = A.partialPivLu().solve(r);
  a_.resize(n);
  for (std::size_t i = 0; i < n; ++i) a_[i] = std::clamp(a(static_cast<Eigen::Index>(i)), 0.0, 1.0);
}

double width_cdf(const OffspringDist& p, std::size_t k, std::size_t n) { return WidthCdf(p, n)(k); }

TailTable width_table(const OffspringDist& p, std::size_t N, const std::vector<std::size_t>& ks,
                      const ExactOptions&) {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  TailTable t;
  t.functional = FunctionalTag::width();
  t.truncation_mass = p.truncation_mass();
  t.tail.resize(N + 1);
  t.point.resize(N + 1);
  for (auto k : ks) t.forest_tail[k].resize(N + 1), t.forest_point[k].resize(N + 1);
  std::vector<double> prev_k(ks.size(), 0.0);
  double prev = 0.0;
  for (std::size_t n = 0; n <= N; ++n) {
    const WidthCdf cdf(p, n);
    t.tail[n] = 1.0 - cdf(1);
    t.point[n] = cdf(1) - prev;
    prev = cdf(1);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const double c = cdf(ks[i]);
      t.forest_tail[ks[i]][n] = 1.0 - c;
      t.forest_point[ks[i]][n] = c - prev_k[i];
      prev_k[i] = c;
    }
  }
  return t;
}

namespace {

std::vector<double> series_mul(const std::vector<double>& a, const std::vector<double>& b, std::size_t len) {
  std::vector<double> c(len, 0.0);
  for (std::size_t i = 0; i < std::min(a.size(), len); ++i) {
    if (a[i] == 0.0) continue;
    for (std::size_t j = 0; j < std::min(b.size(), len - i); ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

std::vector<double> series_pow(const std::vector<double>& a, std::size_t k, std::size_t len) {
  std::vector<double> r(len, 0.0), base = a;
  r[0] = 1.0;
  base.resize(len, 0.0);
  while (k > 0) {
    if (k & 1) r = series_mul(r, base, len);
    k >>= 1;
    if (k) base = series_mul(base, base, len);
  }
  return r;
}

// Coefficients 0..N of phi(x) = E[x^{L_A(tau)}], solved one coefficient at a
// time from phi = sum_k p_k x^{1{k in A}} phi^k.
std::vector<double> count_series(const OffspringDist& p, const DegreeSet& A, std::size_t N,
                                 const ExactOptions& opt) {
  const auto& pmf = p.pmf();
  const std::size_t K = pmf.size() - 1;
  double pA = 0.0;
  std::vector<double> outside(K + 1, 0.0);
  for (std::size_t k = 0; k <= K; ++k) {
    if (A.contains(static_cast<std::uint32_t>(k))) pA += pmf[k];
    else outside[k] = pmf[k];
  }
  if (!(pA > 0.0)) throw std::invalid_argument("degree set has zero offspring mass; count is a.s. 0");
  const double cost = static_cast<double>(K + 1) * static_cast<double>(N + 1) * static_cast<double>(N + 1) / 2;
  if (cost > opt.convolution_budget) throw BudgetExceeded("count series exceeds the convolution budget");

  const double phi0 = least_fixed_point(outside, opt);
  std::vector<double> pow0(K + 1, 1.0);
  for (std::size_t j = 1; j <= K; ++j) pow0[j] = pow0[j - 1] * phi0;
  double c = 0.0;
  for (std::size_t k = 1; k <= K; ++k) c += static_cast<double>(k) * outside[k] * pow0[k - 1];
  if (!(c < 1.0)) throw std::domain_error("count series is singular for this degree set");

  std::vector<double> phi(N + 1, 0.0);
  phi[0] = phi0;
  // pw[j][m] = [x^m] phi^j.
  std::vector<std::vector<double>> pw(K + 1, std::vector<double>(N + 1, 0.0));
  for (std::size_t j = 0; j <= K; ++j) pw[j][0] = pow0[j];
  std::vector<double> S(K + 1, 0.0);
  for (std::size_t m = 1; m <= N; ++m) {
    // S[j]: [x^m] phi^j with the phi_m contribution removed.
    S[0] = 0.0;
    for (std::size_t j = 1; j <= K; ++j) {
      double acc = phi0 * S[j - 1];
      for (std::size_t i = 1; i < m; ++i) acc += phi[i] * pw[j - 1][m - i];
      S[j] = acc;
    }
    double R = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      if (pmf[k] == 0.0) continue;
      R += A.contains(static_cast<std::uint32_t>(k)) ? pmf[k] * pw[k][m - 1] : pmf[k] * S[k];
    }
    phi[m] = R / (1.0 - c);
    for (std::size_t j = 1; j <= K; ++j) pw[j][m] = S[j] + static_cast<double>(j) * pow0[j - 1] * phi[m];
  }
  return phi;
}

}  // namespace

TailTable count_in_set_pmf(const OffspringDist& p, const DegreeSet& A, std::size_t N,
                           const std::vector<std::size_t>& ks, const ExactOptions& opt) {
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  const auto phi = count_series(p, A, N, opt);
  TailTable t;
  t.functional = FunctionalTag::count_in_set(A);
  t.truncation_mass = p.truncation_mass();
  auto fill = [N](const std::vector<double>& pt, std::vector<double>& point, std::vector<double>& tail) {
    point.assign(pt.begin(), pt.begin() + static_cast<std::ptrdiff_t>(N + 1));
    tail.resize(N + 1);
    double cum = 0.0;
    for (std::size_t n = 0; n <= N; ++n) {
      cum += point[n];
      tail[n] = 1.0 - cum;
    }
  };
  fill(phi, t.point, t.tail);
  for (auto k : ks) fill(series_pow(phi, k, N + 1), t.forest_point[k], t.forest_tail[k]);
  return t;
}

TailTable tail_table(const OffspringDist& p, const FunctionalTag& f, std::size_t N,
                     const std::vector<std::size_t>& ks, const ExactOptions& opt) {
  using K = FunctionalTag::Kind;
  switch (f.kind) {
    case K::Height: return height_tail(p, N, ks, opt);
    case K::MaxOutDegree: return maxdeg_tail(p, N, ks, opt);
    case K::Width: return width_table(p, N, ks, opt);
    case K::TotalProgeny: return progeny_pmf(p, N, ks, opt);
    case K::CountInSet: return count_in_set_pmf(p, f.set, N, ks, opt);
  }
  throw std::logic_error("unhandled functional");
}

std::vector<double> max_convolution_point(const std::vector<double>& tail, const std::vector<double>& point,
                                          std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  std::vector<double> cur = point;
  for (std::size_t j = 2; j <= k; ++j) {
    std::vector<double> next(cur.size());
    double below = 0.0;  // P[max_{j-1} < n]
    for (std::size_t n = 0; n < cur.size(); ++n) {
      next[n] = cur[n] * (1.0 - tail[n]) + below * point[n];
      below += cur[n];
    }
    cur.swap(next);
  }
  return cur;
}

double prefix_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b) {
  const auto deg = t.degrees();
  const auto dep = t.depths();
  double prob = 1.0;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (dep[i] > b) throw std::invalid_argument("tree is taller than the prefix height");
    if (dep[i] < b) prob *= p[deg[i]];
    else if (deg[i] != 0) throw std::invalid_argument("nodes at the prefix height must be leaves");
  }
  return prob;
}

double immortal_prefix_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b) {
  const double yb = static_cast<double>(generation_size(t, b));
  if (yb == 0.0) return 0.0;
  return yb * prefix_prob(p, t, b) / std::pow(p.mean(), static_cast<double>(b));
}

double PrefixLaw::total() const {
  double s = 0.0;
  for (const auto& [_, q] : prob) s += q;
  return s;
}

std::string PrefixLaw::to_csv() const {
  std::ostringstream os;
  os << "tree,probability\r\n";
  for (const auto& [t, q] : prob) os << '"' << t.to_string() << "\"," << num(q) << "\r\n";
  return os.str();
}

std::vector<PlaneTree> enumerate_trees(const DegreeSet& allowed, std::size_t maxdeg, std::size_t h,
                                       std::size_t node_cap, std::size_t max_trees) {
  std::vector<PlaneTree> out;
  std::vector<std::uint32_t> deg;
  std::vector<std::size_t> open{0};  // depths of pending nodes, back is next in preorder
  std::function<void()> rec = [&] {
    if (open.empty()) {
      if (out.size() >= max_trees) throw BudgetExceeded("tree enumeration exceeds its budget");
      out.push_back(PlaneTree::from_preorder(deg));
      return;
    }
    const std::size_t d = open.back();
    open.pop_back();
    const std::size_t kmax = d >= h ? 0 : maxdeg;
    for (std::size_t k = 0; k <= kmax; ++k) {
      if (!allowed.contains(static_cast<std::uint32_t>(k))) continue;
      if (deg.size() + 1 + open.size() + k > node_cap) break;
      deg.push_back(static_cast<std::uint32_t>(k));
      for (std::size_t c = 0; c < k; ++c) open.push_back(d + 1);
      rec();
      open.resize(open.size() - k);
      deg.pop_back();
    }
    open.push_back(d);
  };
  rec();
  return out;
}

namespace {

enum class Weighting { Plain, SizeBiased };

// Pruned preorder enumeration of prefixes of height <= b. `weight` of a
// partial prefix is its GW probability, times mu^{-b} E[Y_b | partial] when
// size-biased; both split exactly over the children choices.
PrefixLaw enumerate_prefixes(const OffspringDist& p, std::size_t b, Weighting mode, const EnumerationOptions& opt) {
  const auto support = support_of(p);
  const double mu = p.mean();
  std::vector<double> mu_pow(b + 2, 1.0);
  for (std::size_t i = 1; i < mu_pow.size(); ++i) mu_pow[i] = mu_pow[i - 1] * mu;

  PrefixLaw law;
  law.height = b;
  std::vector<std::uint32_t> deg;
  std::vector<std::size_t> open{0};
  double deficiency = 0.0;
  std::size_t emitted = 0;

  // prob: GW probability of the partial prefix; ey: E[Y_b | partial] (size-biased only).
  std::function<void(double, double)> rec = [&](double prob, double ey) {
    if (open.empty()) {
      if (++emitted > opt.max_trees) throw BudgetExceeded("prefix enumeration exceeds its budget");
      const double w = mode == Weighting::Plain ? prob : prob * ey / mu_pow[b];
      if (w > 0.0) law.prob.emplace(PlaneTree::from_preorder(deg), w);
      return;
    }
    const std::size_t d = open.back();
    open.pop_back();
    if (d == b) {
      deg.push_back(0);
      rec(prob, ey);
      deg.pop_back();
    } else {
      for (auto k : support) {
        const double cp = prob * p[k];
        // Each slot at depth d contributes mu^{b-d} to ey before its degree is drawn.
        // Exactly 0 when no slot can reach depth b; clamp the rounding residue.
        const double cey = std::max(0.0, ey - mu_pow[b - d] + static_cast<double>(k) * mu_pow[b - d - 1]);
        const double w = mode == Weighting::Plain ? cp : cp * cey / mu_pow[b];
        if (w < opt.prune_below) {
          deficiency += w;
          continue;
        }
        deg.push_back(static_cast<std::uint32_t>(k));
        for (std::size_t c = 0; c < k; ++c) open.push_back(d + 1);
        rec(cp, cey);
        open.resize(open.size() - k);
        deg.pop_back();
      }
    }
    open.push_back(d);
  };
  rec(1.0, mu_pow[b]);
  law.deficiency = deficiency;
  return law;
}

}  // namespace

PrefixLaw gw_prefix_law(const OffspringDist& p, std::size_t b, const EnumerationOptions& opt) {
  return enumerate_prefixes(p, b, Weighting::Plain, opt);
}

PrefixLaw immortal_prefix_law(const OffspringDist& p, std::size_t b, const EnumerationOptions& opt) {
  if (p.mean() > 1.0 + 1e-12) throw std::invalid_argument("immortal tree needs mu <= 1");
  return enumerate_prefixes(p, b, Weighting::SizeBiased, opt);
}

std::string Conditioning::to_string() const {
  return (kind == Kind::Tail ? "tail:" : "point:") + std::to_string(n);
}

Conditioning Conditioning::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("conditioning must be tail:N or point:N");
  const auto kind = text.substr(0, colon);
  const std::string num(text.substr(colon + 1));
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(num, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != num.size()) throw std::invalid_argument("bad conditioning level '" + num + "'");
  if (kind == "tail") return tail(n);
  if (kind == "point") return point(n);
  throw std::invalid_argument("conditioning kind must be tail or point");
}

ConditionedLaw::ConditionedLaw(const OffspringDist& p, const FunctionalTag& f, Conditioning cond, std::size_t b,
                               const ExactOptions& opt)
    : p_(p), f_(f), cond_(cond), b_(b) {
  using K = FunctionalTag::Kind;
  const std::size_t n = cond.n;
  const bool tail = cond.kind == Conditioning::Kind::Tail;
  switch (f.kind) {
    case K::Height: {
      const auto t = height_tail(p, n + 1, {}, opt);
      w_.resize(n + 3);
      w_[0] = 1.0;
      for (std::size_t m = 0; m <= n + 1; ++m) w_[m + 1] = t.tail[m];
      normalizer_ = tail ? w_[n + 1] : w_[n] - w_[n + 1];
      break;
    }
    case K::MaxOutDegree: {
      cdf_.resize(n + 1);
      for (std::size_t m = 0; m <= n; ++m) cdf_[m] = maxdeg_cdf(p, m, opt);
      normalizer_ = tail ? 1.0 - cdf_[n] : cdf_[n] - (n > 0 ? cdf_[n - 1] : 0.0);
      break;
    }
    case K::Width: {
      if (!tail && p.truncation_mass() > 0.0)
        throw std::invalid_argument("width point conditioning needs an offspring law with bounded support");
      width_n_.emplace(p, n);
      if (n > 0) width_n1_.emplace(p, n - 1);
      normalizer_ = tail ? 1.0 - (*width_n_)(1) : (*width_n_)(1) - (n > 0 ? (*width_n1_)(1) : 0.0);
      break;
    }
    case K::TotalProgeny:
    case K::CountInSet: {
      const DegreeSet A = f.kind == K::TotalProgeny ? DegreeSet::all() : f.set;
      forest_pmf_[1] = count_series(p, A, n, opt);
      const auto& phi = forest_pmf_[1];
      double cum = 0.0;
      for (std::size_t m = 0; m <= n; ++m) cum += phi[m];
      normalizer_ = tail ? 1.0 - cum : phi[n];
      break;
    }
  }
  if (!(normalizer_ > 0.0)) throw ZeroProbabilityEvent("conditioning event " + f.name() + " " + cond.to_string() +
                                                       " has probability zero");
}

double ConditionedLaw::event_given_prefix(const PlaneTree& t) const {
  using K = FunctionalTag::Kind;
  const auto deg = t.degrees();
  const auto dep = t.depths();
  const auto gens = generation_sizes(t);
  const std::size_t b = b_;
  const std::size_t n = cond_.n;
  const bool tail = cond_.kind == Conditioning::Kind::Tail;
  const std::size_t k = gens.size() > b ? gens[b] : 0;
  if (gens.size() > b + 1) throw std::invalid_argument("tree is taller than the prefix height");

  switch (f_.kind) {
    case K::Height: {
      if (k == 0) {
        const std::size_t h = gens.size() - 1;
        return tail ? (h > n ? 1.0 : 0.0) : (h == n ? 1.0 : 0.0);
      }
      // H(tau) = b + max of k iid heights.
      if (tail) {
        if (n < b) return 1.0;
        return 1.0 - pow_complement(w_[n - b + 1], k);
      }
      if (n < b) return 0.0;
      return pow_complement(w_[n - b + 1], k) - pow_complement(w_[n - b], k);
    }
    case K::MaxOutDegree: {
      std::size_t m0 = 0;
      for (std::size_t i = 0; i < deg.size(); ++i)
        if (dep[i] < b) m0 = std::max<std::size_t>(m0, deg[i]);
      auto Fk = [&](std::size_t m) { return std::pow(cdf_[m], static_cast<double>(k)); };
      if (tail) return m0 > n ? 1.0 : 1.0 - Fk(n);
      if (m0 > n) return 0.0;
      if (m0 == n) return Fk(n);
      return Fk(n) - (n > 0 ? Fk(n - 1) : 0.0);
    }
    case K::Width: {
      std::size_t w0 = 0;
      for (std::size_t h = 0; h < std::min(b, gens.size()); ++h) w0 = std::max(w0, gens[h]);
      const double cn = (*width_n_)(k);
      if (tail) return w0 > n ? 1.0 : 1.0 - cn;
      if (w0 > n) return 0.0;
      if (w0 == n) return cn;
      return cn - (n > 0 ? (*width_n1_)(k) : 0.0);
    }
    case K::TotalProgeny:
    case K::CountInSet: {
      std::size_t c = 0;
      for (std::size_t i = 0; i < deg.size(); ++i)
        if (dep[i] < b && (f_.kind == K::TotalProgeny || f_.set.contains(deg[i]))) ++c;
      if (k == 0) return tail ? (c > n ? 1.0 : 0.0) : (c == n ? 1.0 : 0.0);
      if (c > n) return tail ? 1.0 : 0.0;
      auto it = forest_pmf_.find(k);
      if (it == forest_pmf_.end()) it = forest_pmf_.emplace(k, series_pow(forest_pmf_.at(1), k, n + 1)).first;
      const auto& pm = it->second;
      if (!tail) return pm[n - c];
      double cum = 0.0;
      for (std::size_t m = 0; m <= n - c; ++m) cum += pm[m];
      return std::max(0.0, 1.0 - cum);
    }
  }
  return 0.0;
}

double ConditionedLaw::prob(const PlaneTree& t) const {
  const double base = prefix_prob(p_, t, b_);
  if (base == 0.0) return 0.0;
  return base * event_given_prefix(t) / normalizer_;
}

PrefixLaw ConditionedLaw::law(const EnumerationOptions& opt) const {
  const auto gw = gw_prefix_law(p_, b_, opt);
  PrefixLaw out;
  out.height = b_;
  double total = 0.0;
  for (const auto& [t, q] : gw.prob) {
    const double c = q * event_given_prefix(t) / normalizer_;
    if (c > 0.0) {
      out.prob.emplace(t, c);
      total += c;
    }
  }
  out.deficiency = std::max(0.0, 1.0 - total);
  return out;
}

PrefixLaw conditioned_prefix_law(const OffspringDist& p, const FunctionalTag& f, Conditioning cond, std::size_t b,
                                 const EnumerationOptions& opt) {
  return ConditionedLaw(p, f, cond, b).law(opt);
}

double tv_distance(const PrefixLaw& a, const PrefixLaw& b) {
  if (a.height != b.height) throw std::invalid_argument("prefix laws have different heights");
  double s = 0.0;
  auto ia = a.prob.begin();
  auto ib = b.prob.begin();
  while (ia != a.prob.end() || ib != b.prob.end()) {
    if (ib == b.prob.end() || (ia != a.prob.end() && ia->first < ib->first)) {
      s += ia->second;
      ++ia;
    } else if (ia == a.prob.end() || ib->first < ia->first) {
      s += ib->second;
      ++ib;
    } else {
      s += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return std::min(1.0, 0.5 * s + 0.5 * (a.deficiency + b.deficiency));
}

double tv_empirical(const std::map<PlaneTree, std::size_t>& counts, std::size_t n,
                    const std::function<double(const PlaneTree&)>& exact) {
  if (n == 0) throw std::invalid_argument("no samples");
  double diff = 0.0, seen = 0.0;
  for (const auto& [t, c] : counts) {
    const double q = exact(t);
    diff += std::abs(static_cast<double>(c) / static_cast<double>(n) - q);
    seen += q;
  }
  return std::min(1.0, 0.5 * (diff + std::max(0.0, 1.0 - seen)));
}

}  // namespace branchlim
