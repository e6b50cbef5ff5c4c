#include "branchlim/discrete_lab.hpp"

#include "branchlim/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace branchlim {

namespace {

constexpr std::size_t kChunks = 16;

using csv::num;
using csv::quote;

// Empirical TV to an exact law, with a batch-means standard error.
struct EmpiricalTv {
  double tv = 0.0;
  double se = 0.0;
};

EmpiricalTv empirical_tv(const std::vector<std::map<PlaneTree, std::size_t>>& chunk_counts,
                         const std::function<double(const PlaneTree&)>& exact) {
  std::map<PlaneTree, std::size_t> all;
  std::size_t total = 0;
  std::vector<double> per_chunk;
  std::map<PlaneTree, double> cache;
  auto cached = [&](const PlaneTree& t) {
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, exact(t)).first;
    return it->second;
  };
  for (const auto& c : chunk_counts) {
    std::size_t n = 0;
    for (const auto& [t, m] : c) {
      all[t] += m;
      n += m;
    }
    total += n;
    if (n > 0) per_chunk.push_back(tv_empirical(c, n, cached));
  }
  EmpiricalTv out;
  out.tv = tv_empirical(all, total, cached);
  if (per_chunk.size() > 1) {
    double mean = 0.0;
    for (double v : per_chunk) mean += v;
    mean /= static_cast<double>(per_chunk.size());
    double var = 0.0;
    for (double v : per_chunk) var += (v - mean) * (v - mean);
    var /= static_cast<double>(per_chunk.size() - 1);
    out.se = std::sqrt(var / static_cast<double>(per_chunk.size()));
  }
  return out;
}

struct McPrefixSample {
  std::vector<std::map<PlaneTree, std::size_t>> counts;
  std::size_t attempts = 0;
  bool exhausted = false;
};

McPrefixSample sample_prefixes(const OffspringDist& p, const FunctionalTag& f, Conditioning cond, std::size_t b,
                               const LabOptions& opt, std::uint64_t tag) {
  McPrefixSample out;
  out.counts.resize(kChunks);
  std::vector<std::size_t> attempts(kChunks, 0);
  std::vector<char> exhausted(kChunks, 0);
  RejectionBudget budget = opt.budget;
  budget.skip_exact_check = true;
  const Rng base = Rng(opt.seed).split(tag);
  parallel_for_chunks(kChunks, opt.workers, [&](std::size_t c) {
    Rng rng = base.split(c);
    const std::size_t lo = opt.reps * c / kChunks, hi = opt.reps * (c + 1) / kChunks;
    for (std::size_t i = lo; i < hi; ++i) {
      auto s = sample_conditioned_prefix(p, f, cond, b, rng, budget);
      attempts[c] += s.attempts;
      if (!s.tree) {
        exhausted[c] = 1;
        return;
      }
      ++out.counts[c][*s.tree];
    }
  });
  for (std::size_t c = 0; c < kChunks; ++c) {
    out.attempts += attempts[c];
    out.exhausted = out.exhausted || exhausted[c];
  }
  return out;
}

std::uint64_t tag_of(const char* kind, const FunctionalTag& f, std::size_t n, std::size_t extra = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  auto eat = [&](const std::string& s) {
    for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  };
  eat(kind);
  eat(f.name());
  return Rng::mix(h ^ Rng::mix(n * 1000003ULL + extra));
}

ConvergenceReport run_convergence(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                  const std::vector<std::size_t>& n_grid, const LabOptions& opt,
                                  Conditioning::Kind kind) {
  if (p.classify() != Criticality::Critical &&
      !(kind == Conditioning::Kind::Point && f.kind == FunctionalTag::Kind::Height &&
        p.classify() == Criticality::Subcritical))
    throw std::invalid_argument("convergence experiments need a critical offspring law");
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
      std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end())
    throw std::invalid_argument("n grid must be strictly increasing");

  ConvergenceReport rep;
  rep.offspring = p.describe();
  rep.functional = f.name();
  rep.conditioning = kind == Conditioning::Kind::Tail ? "tail" : "point";
  rep.b = b;
  rep.grid = n_grid;

  const bool exact = opt.mode == LabMode::Exact;
  PrefixLaw immortal;
  if (exact) {
    immortal = immortal_prefix_law(p, b, opt.enumeration);
    rep.reference_total = immortal.total();
    rep.reference_deficiency = immortal.deficiency;
  }

  for (auto n : n_grid) {
    TvRow row;
    row.n = n;
    row.exact = exact;
    const Conditioning cond{kind, n};
    try {
      ConditionedLaw law(p, f, cond, b);
      row.event_probability = law.event_probability();
      if (exact) {
        row.tv = tv_distance(law.law(opt.enumeration), immortal);
      }
    } catch (const ZeroProbabilityEvent&) {
      row.note = "skipped: conditioning event has probability zero";
    } catch (const std::invalid_argument& e) {
      if (exact) throw;
      row.note = std::string("exact reference unavailable: ") + e.what();
    }
    if (!exact && !row.skipped()) {
      const auto mc = sample_prefixes(p, f, cond, b, opt, tag_of(rep.conditioning.c_str(), f, n));
      row.attempts = mc.attempts;
      if (mc.exhausted) {
        row.note = "skipped: rejection budget exhausted";
      } else {
        const auto e = empirical_tv(mc.counts, [&](const PlaneTree& t) { return immortal_prefix_prob(p, t, b); });
        row.tv = e.tv;
        row.se = e.se;
      }
    }
    rep.tv_rows.push_back(row);
  }
  rep.degenerate_lattice = !rep.tv_rows.empty() && rep.tv_rows.back().skipped() &&
                           rep.tv_rows.back().note.find("probability zero") != std::string::npos;
  return rep;
}

}  // namespace

std::vector<std::size_t> powers_of_two(std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t v = 1; v <= hi; v *= 2)
    if (v >= lo) out.push_back(v);
  return out;
}

std::string ConvergenceReport::to_csv() const {
  std::ostringstream os;
  if (!ratio_rows.empty()) {
    os << "n,k,tail_ratio,tail_se,point_ratio,point_se";
    for (auto r : r_list) os << ",shift_ratio_r" << r << ",shift_se_r" << r;
    os << ",gwmax_gap,exact,note\r\n";
    for (const auto& row : ratio_rows) {
      os << row.n << ',' << row.k << ',' << num(row.tail_ratio) << ',' << num(row.tail_se) << ','
         << num(row.point_ratio) << ',' << num(row.point_se);
      for (std::size_t i = 0; i < r_list.size(); ++i) os << ',' << num(row.shift_ratio[i]) << ',' << num(row.shift_se[i]);
      os << ',' << (row.gwmax_gap < 0 ? std::string() : num(row.gwmax_gap)) << ',' << (row.exact ? 1 : 0) << ','
         << quote(row.note) << "\r\n";
    }
    return os.str();
  }
  const bool probe = conditioning == "probe";
  os << "n,tv,tv_se";
  if (probe) os << ",tv_truncated_spine,tv_truncated_spine_se";
  os << ",event_probability,attempts,exact,note\r\n";
  for (const auto& row : tv_rows) {
    const bool skip = row.skipped();
    os << row.n << ',' << (skip ? "" : num(row.tv)) << ',' << (skip ? "" : num(row.se));
    if (probe) os << ',' << (skip ? "" : num(row.tv_alt)) << ',' << (skip ? "" : num(row.se_alt));
    os << ',' << num(row.event_probability) << ',' << row.attempts << ',' << (row.exact ? 1 : 0) << ','
       << quote(row.note) << "\r\n";
  }
  return os.str();
}

nlohmann::json ConvergenceReport::metadata() const {
  return {{"offspring", nlohmann::json::parse(offspring)},
          {"functional", functional},
          {"conditioning", conditioning},
          {"b", b},
          {"grid", grid},
          {"r_list", r_list},
          {"degenerate_lattice", degenerate_lattice},
          {"exploratory", exploratory},
          {"reference_total", reference_total},
          {"reference_deficiency", reference_deficiency}};
}

std::vector<const TvRow*> ConvergenceReport::evaluated() const {
  std::vector<const TvRow*> out;
  for (const auto& r : tv_rows)
    if (!r.skipped()) out.push_back(&r);
  return out;
}

ConvergenceReport run_tail_convergence(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                       const std::vector<std::size_t>& n_grid, const LabOptions& opt) {
  return run_convergence(p, f, b, n_grid, opt, Conditioning::Kind::Tail);
}

ConvergenceReport run_point_convergence(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                        const std::vector<std::size_t>& n_grid, const LabOptions& opt) {
  return run_convergence(p, f, b, n_grid, opt, Conditioning::Kind::Point);
}

std::optional<std::size_t> sample_functional_capped(const OffspringDist& p, const FunctionalTag& f, std::size_t k,
                                                    std::size_t cap, Rng& rng, std::size_t node_cap) {
  using K = FunctionalTag::Kind;
  std::size_t total = k, max_gen = k, height = 0, max_deg = 0, count = 0;
  std::size_t gen = k, depth = 0;
  auto value = [&] {
    switch (f.kind) {
      case K::Height: return height;
      case K::Width: return max_gen;
      case K::MaxOutDegree: return max_deg;
      case K::TotalProgeny: return total;
      case K::CountInSet: return count;
    }
    return std::size_t{0};
  };
  if (value() > cap) return cap + 1;
  while (gen > 0) {
    std::size_t next = 0;
    for (std::size_t i = 0; i < gen; ++i) {
      const auto d = p.draw(rng.uniform());
      next += d;
      max_deg = std::max<std::size_t>(max_deg, d);
      if (f.kind == K::CountInSet && f.set.contains(d)) ++count;
    }
    total += next;
    if (total > node_cap) return std::nullopt;
    max_gen = std::max(max_gen, next);
    ++depth;
    if (next > 0) height = depth;
    if (value() > cap) return cap + 1;
    gen = next;
  }
  return value();
}

ConvergenceReport run_ratio_limits(const OffspringDist& p, const FunctionalTag& f,
                                   const std::vector<std::size_t>& k_list, const std::vector<std::size_t>& r_list,
                                   const std::vector<std::size_t>& n_grid, const LabOptions& opt) {
  if (p.classify() != Criticality::Critical) throw std::invalid_argument("ratio limits need a critical offspring law");
  if (n_grid.empty()) throw std::invalid_argument("empty n grid");
  ConvergenceReport rep;
  rep.offspring = p.describe();
  rep.functional = f.name();
  rep.conditioning = "ratio";
  rep.grid = n_grid;
  rep.r_list = r_list;
  const std::size_t N = *std::max_element(n_grid.begin(), n_grid.end());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto ratio = [&](double a, double b) { return b > 0.0 ? a / b : nan; };

  if (opt.mode == LabMode::Exact) {
    std::vector<std::size_t> ks = k_list;
    if (std::find(ks.begin(), ks.end(), std::size_t{1}) == ks.end()) ks.push_back(1);
    if (f.kind == FunctionalTag::Kind::TotalProgeny)
      ks.erase(std::remove_if(ks.begin(), ks.end(), [&](std::size_t k) { return k > N; }), ks.end());
    const auto table = tail_table(p, f, N, ks);
    for (auto k : k_list) {
      std::vector<double> conv;
      if (f.is_max_type()) conv = max_convolution_point(table.tail, table.point, k);
      for (auto n : n_grid) {
        RatioRow row;
        row.n = n;
        row.k = k;
        const double kk = static_cast<double>(k);
        const auto& ft = table.forest_tail.at(k);
        const auto& fp = table.forest_point.at(k);
        row.tail_ratio = ratio(ft[n], kk * table.tail[n]);
        row.point_ratio = ratio(fp[n], kk * table.point[n]);
        for (auto r : r_list) {
          row.shift_ratio.push_back(r <= n ? ratio(ft[n - r], ft[n]) : nan);
          row.shift_se.push_back(0.0);
        }
        if (f.is_max_type()) row.gwmax_gap = std::abs(fp[n] - conv[n]);
        if (std::isnan(row.tail_ratio) || std::isnan(row.point_ratio)) row.note = "division by zero";
        rep.ratio_rows.push_back(row);
      }
    }
    return rep;
  }

  // Monte Carlo: capped functional values of single trees and k-forests.
  std::vector<std::size_t> ks = k_list;
  if (std::find(ks.begin(), ks.end(), std::size_t{1}) == ks.end()) ks.insert(ks.begin(), 1);
  std::map<std::size_t, std::vector<std::size_t>> hist;  // k -> counts of min(A, N+1)
  for (auto k : ks) {
    std::vector<std::vector<std::size_t>> chunk_hist(kChunks, std::vector<std::size_t>(N + 2, 0));
    const Rng base = Rng(opt.seed).split(tag_of("ratio", f, k));
    parallel_for_chunks(kChunks, opt.workers, [&](std::size_t c) {
      Rng rng = base.split(c);
      const std::size_t lo = opt.reps * c / kChunks, hi = opt.reps * (c + 1) / kChunks;
      for (std::size_t i = lo; i < hi; ++i) {
        auto v = sample_functional_capped(p, f, k, N, rng, opt.budget.node_cap);
        ++chunk_hist[c][v ? *v : N + 1];  // overflow means A is above any grid value here
      }
    });
    auto& h = hist[k];
    h.assign(N + 2, 0);
    for (const auto& ch : chunk_hist)
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += ch[i];
  }
  const double reps = static_cast<double>(opt.reps);
  auto tail_est = [&](std::size_t k, std::size_t n) {
    double c = 0.0;
    for (std::size_t i = n + 1; i < hist[k].size(); ++i) c += static_cast<double>(hist[k][i]);
    return c / reps;
  };
  auto point_est = [&](std::size_t k, std::size_t n) { return static_cast<double>(hist[k][n]) / reps; };
  auto ratio_se = [&](double a, double b, double scale) {
    // Delta method for a ratio of independent binomial proportions.
    if (a <= 0.0 || b <= 0.0) return nan;
    const double va = a * (1 - a) / reps, vb = b * (1 - b) / reps;
    return a / b / scale * std::sqrt(va / (a * a) + vb / (b * b));
  };
  for (auto k : k_list) {
    for (auto n : n_grid) {
      RatioRow row;
      row.n = n;
      row.k = k;
      row.exact = false;
      const double kk = static_cast<double>(k);
      const double a = tail_est(k, n), b1 = tail_est(1, n);
      row.tail_ratio = ratio(a, kk * b1);
      row.tail_se = ratio_se(a, b1, kk);
      const double pa = point_est(k, n), pb = point_est(1, n);
      row.point_ratio = ratio(pa, kk * pb);
      row.point_se = ratio_se(pa, pb, kk);
      for (auto r : r_list) {
        // Shifted tails share samples; the se ignores that positive correlation.
        const double s = r <= n ? tail_est(k, n - r) : nan;
        row.shift_ratio.push_back(r <= n ? ratio(s, a) : nan);
        row.shift_se.push_back(r <= n ? ratio_se(s, a, 1.0) : nan);
      }
      if (std::isnan(row.tail_ratio) || std::isnan(row.point_ratio)) row.note = "division by zero";
      rep.ratio_rows.push_back(row);
    }
  }
  return rep;
}

std::size_t probe_threshold(const OffspringDist& p, const FunctionalTag& f, std::size_t n) {
  if (f.kind == FunctionalTag::Kind::MaxOutDegree) return n;
  if (f.kind == FunctionalTag::Kind::TotalProgeny)
    return static_cast<std::size_t>(std::floor((1.0 - std::min(p.mean(), 1.0)) * static_cast<double>(n)));
  throw std::invalid_argument("probe supports maxdeg and progeny only");
}

double offspring_tail_above(const OffspringDist& p, std::size_t m) {
  double tail = 0.0;
  for (std::size_t k = p.pmf().size(); k-- > m + 1;) tail += p[k];
  return tail;
}

double truncated_spine_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b, std::size_t threshold) {
  return truncated_spine_prob(p, t, b, threshold, offspring_tail_above(p, threshold));
}

double truncated_spine_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b, std::size_t threshold,
                            double tail) {
  const double mu = p.mean();
  if (mu > 1.0 + 1e-12) throw std::invalid_argument("spine-truncated reference needs mu <= 1");
  const double base = prefix_prob(p, t, b);
  if (base == 0.0) return 0.0;
  const auto deg = t.degrees();
  const auto dep = t.depths();
  std::size_t yb = 0, big = 0;
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (dep[i] == b) ++yb;
    else if (deg[i] > threshold) ++big;
  }
  double weight = static_cast<double>(yb);
  if (mu < 1.0 - 1e-12) {
    if (!(tail > 0.0)) throw std::invalid_argument("no offspring mass above the probe threshold");
    weight += (1.0 - mu) * static_cast<double>(big) / tail;
  }
  return base * weight;
}

ConvergenceReport probe_conjectures(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                    const std::vector<std::size_t>& n_grid, const LabOptions& opt) {
  if (p.classify() == Criticality::Supercritical) throw std::invalid_argument("probe needs mu <= 1");
  if (f.kind != FunctionalTag::Kind::MaxOutDegree && f.kind != FunctionalTag::Kind::TotalProgeny)
    throw std::invalid_argument("probe supports maxdeg and progeny only");
  ConvergenceReport rep;
  rep.offspring = p.describe();
  rep.functional = f.name();
  rep.conditioning = "probe";
  rep.b = b;
  rep.grid = n_grid;
  rep.exploratory = true;
  for (auto n : n_grid) {
    TvRow row;
    row.n = n;
    row.exact = false;
    const auto cond = Conditioning::tail(n);
    if (!event_possible(p, f, cond)) {
      row.note = "skipped: conditioning event has probability zero";
      rep.tv_rows.push_back(row);
      continue;
    }
    const auto mc = sample_prefixes(p, f, cond, b, opt, tag_of("probe", f, n));
    row.attempts = mc.attempts;
    row.event_probability = static_cast<double>(opt.reps) / static_cast<double>(std::max<std::size_t>(mc.attempts, 1));
    if (mc.exhausted) {
      row.note = "skipped: rejection budget exhausted";
      rep.tv_rows.push_back(row);
      continue;
    }
    const auto a = empirical_tv(mc.counts, [&](const PlaneTree& t) { return immortal_prefix_prob(p, t, b); });
    const std::size_t m = probe_threshold(p, f, n);
    const double above = offspring_tail_above(p, m);
    const auto c =
        empirical_tv(mc.counts, [&](const PlaneTree& t) { return truncated_spine_prob(p, t, b, m, above); });
    row.tv = a.tv;
    row.se = a.se;
    row.tv_alt = c.tv;
    row.se_alt = c.se;
    row.note = "exploratory";
    rep.tv_rows.push_back(row);
  }
  return rep;
}

}  // namespace branchlim
