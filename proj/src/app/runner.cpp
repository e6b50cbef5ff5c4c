#include "branchlim/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "branchlim/acceptance.hpp"
#include "branchlim/cb.hpp"
#include "branchlim/continuum.hpp"
#include "branchlim/csv.hpp"
#include "branchlim/discrete_lab.hpp"
#include "branchlim/exact_law.hpp"
#include "branchlim/offspring.hpp"
#include "branchlim/samplers.hpp"

#ifndef BRANCHLIM_VERSION
#define BRANCHLIM_VERSION "0.0.0"
#endif

namespace branchlim::runner {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Raised by an experiment whose rejection or iteration budget ran out.
class BudgetExhausted : public std::runtime_error {
 public:
  BudgetExhausted(const std::string& what, json diag) : std::runtime_error(what), diagnostic(std::move(diag)) {}
  json diagnostic;
};

// Reads fields of one JSON object, remembering which keys were consumed.
class Obj {
 public:
  Obj(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + " must be a JSON object");
  }

  template <class T>
  T req(const std::string& key) {
    if (!j_.contains(key)) throw ValidationError(where_ + ": missing required field '" + key + "'");
    return get<T>(key);
  }

  template <class T>
  T opt(const std::string& key, T def) {
    return j_.contains(key) ? get<T>(key) : def;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  /// Raw sub-document, validated by its own parser.
  const json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ValidationError(where_ + ": missing required field '" + key + "'");
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.contains(it.key())) throw ValidationError(where_ + ": unknown field '" + it.key() + "'");
  }

 private:
  template <class T>
  T get(const std::string& key) {
    used_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ValidationError(where_ + "." + key + " must be a nonnegative integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ValidationError(where_ + "." + key + " must be a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(where_ + "." + key + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(where_ + "." + key + " must be a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ValidationError(where_ + "." + key + " has the wrong type");
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  json metadata = json::object();
  std::string summary;
  bool failed = false;  // acceptance criteria failing
};

struct Context {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

using Plan = std::function<Artifacts()>;

template <class F>
auto parse_or_reject(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

OffspringDist parse_offspring(Obj& c) {
  const json& j = c.raw("offspring");
  return parse_or_reject("offspring", [&] { return OffspringDist::from_json(j); });
}

FunctionalTag parse_functional(Obj& c) {
  const auto s = c.req<std::string>("functional");
  return parse_or_reject("functional", [&] { return FunctionalTag::parse(s); });
}

BranchingMechanism parse_mechanism(Obj& c) {
  const json& j = c.raw("mechanism");
  return parse_or_reject("mechanism", [&] { return BranchingMechanism::from_json(j); });
}

RejectionBudget parse_budget(Obj& c) {
  RejectionBudget b;
  if (!c.has("budget")) return b;
  Obj o(c.raw("budget"), "budget");
  b.max_attempts = o.opt<std::size_t>("max_attempts", b.max_attempts);
  b.node_cap = o.opt<std::size_t>("node_cap", b.node_cap);
  o.finish();
  if (b.max_attempts == 0 || b.node_cap == 0) throw ValidationError("budget values must be positive");
  return b;
}

LabOptions parse_lab(Obj& c, const Context& ctx) {
  LabOptions lo;
  const auto mode = c.opt<std::string>("mode", "exact");
  if (mode == "exact") lo.mode = LabMode::Exact;
  else if (mode == "mc") lo.mode = LabMode::MonteCarlo;
  else throw ValidationError("mode must be 'exact' or 'mc'");
  lo.reps = c.opt<std::size_t>("reps", lo.reps);
  lo.budget = parse_budget(c);
  lo.seed = ctx.seed;
  lo.workers = ctx.workers;
  if (lo.reps < 2) throw ValidationError("reps must be >= 2");
  return lo;
}

std::vector<std::size_t> positive_grid(Obj& c, const std::string& key) {
  auto g = c.req<std::vector<std::size_t>>(key);
  if (g.empty()) throw ValidationError(key + " must not be empty");
  return g;
}

std::vector<double> number_list(Obj& c, const std::string& key, std::vector<double> def, bool required = false) {
  auto v = required ? c.req<std::vector<double>>(key) : c.opt<std::vector<double>>(key, std::move(def));
  if (v.empty()) throw ValidationError(key + " must not be empty");
  return v;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// Reports carrying exhausted rejection rows end the run with exit 3.
void check_budget_rows(const ConvergenceReport& rep) {
  std::vector<std::size_t> rows;
  for (const auto& r : rep.tv_rows)
    if (r.note == "skipped: rejection budget exhausted") rows.push_back(r.n);
  if (!rows.empty())
    throw BudgetExhausted("rejection budget exhausted", {{"grid_points", rows}, {"report", rep.metadata()}});
}

std::string tv_summary(const ConvergenceReport& rep) {
  std::ostringstream os;
  for (const auto& r : rep.tv_rows) {
    os << "  n=" << r.n;
    if (r.skipped()) os << "  " << r.note;
    else os << "  TV=" << csv::num(r.tv) << (r.exact ? "" : "  se=" + csv::num(r.se));
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

Plan plan_exact(Obj& c, const Context&) {
  const auto p = parse_offspring(c);
  const auto f = parse_functional(c);
  const auto N = c.req<std::size_t>("N");
  const auto ks = c.opt<std::vector<std::size_t>>("ks", {});
  std::optional<std::tuple<std::size_t, std::string, std::optional<Conditioning>, double>> prefix;
  if (c.has("prefix")) {
    Obj o(c.raw("prefix"), "prefix");
    const auto b = o.req<std::size_t>("b");
    const auto law = o.opt<std::string>("law", "conditioned");
    std::optional<Conditioning> cond;
    if (law == "conditioned") {
      const auto s = o.req<std::string>("conditioning");
      cond = parse_or_reject("conditioning", [&] { return Conditioning::parse(s); });
    }
    require(law == "gw" || law == "immortal" || law == "conditioned", "prefix.law must be gw, immortal or conditioned");
    const double prune = o.opt<double>("prune_below", 1e-14);
    o.finish();
    prefix.emplace(b, law, cond, prune);
  }
  return [=] {
    Artifacts a;
    const auto table = tail_table(p, f, N, ks);
    a.files.emplace_back("tail_table.csv", table.to_csv());
    a.metadata["offspring"] = p.to_json();
    a.metadata["functional"] = f.name();
    a.metadata["truncation_mass"] = table.truncation_mass;
    std::ostringstream os;
    os << "exact " << f.name() << " table up to N=" << N << " for " << p.describe() << '\n';
    if (prefix) {
      const auto& [b, law, cond, prune] = *prefix;
      EnumerationOptions eo;
      eo.prune_below = prune;
      PrefixLaw pl = law == "gw" ? gw_prefix_law(p, b, eo)
                     : law == "immortal" ? immortal_prefix_law(p, b, eo)
                                         : conditioned_prefix_law(p, f, *cond, b, eo);
      a.files.emplace_back("prefix_law.csv", pl.to_csv());
      a.metadata["prefix"] = {{"b", b}, {"law", law}, {"atoms", pl.prob.size()}, {"deficiency", pl.deficiency}};
      if (cond) a.metadata["prefix"]["conditioning"] = cond->to_string();
      os << "prefix law (" << law << ", b=" << b << "): " << pl.prob.size() << " atoms, deficiency "
         << csv::num(pl.deficiency) << '\n';
    }
    a.summary = os.str();
    return a;
  };
}

Plan plan_sample(Obj& c, const Context& ctx) {
  const auto p = parse_offspring(c);
  const auto kind = c.req<std::string>("kind");
  const auto count = c.req<std::size_t>("count");
  const auto budget = parse_budget(c);
  std::size_t b = 0;
  std::optional<FunctionalTag> f;
  std::optional<Conditioning> cond;
  if (kind == "gw") {
  } else if (kind == "prefix" || kind == "immortal") {
    b = c.req<std::size_t>("b");
  } else if (kind == "conditioned" || kind == "conditioned-prefix") {
    f = parse_functional(c);
    const auto s = c.req<std::string>("conditioning");
    cond = parse_or_reject("conditioning", [&] { return Conditioning::parse(s); });
    if (kind == "conditioned-prefix") b = c.req<std::size_t>("b");
  } else {
    throw ValidationError("kind must be gw, prefix, immortal, conditioned or conditioned-prefix");
  }
  require(count > 0, "count must be positive");
  const std::uint64_t seed = ctx.seed;
  return [=] {
    Artifacts a;
    std::vector<PlaneTree> trees;
    Rng base = Rng(seed).split(0x5A);
    std::size_t attempts = 0;
    if (cond && !event_possible(p, *f, *cond))
      throw std::invalid_argument("conditioning event has probability zero");
    RejectionBudget bud = budget;
    bud.skip_exact_check = true;
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = base.split(i);
      if (kind == "gw") {
        auto t = sample_gw(p, rng, budget.node_cap);
        if (!t) throw BudgetExhausted("node cap exceeded", {{"sample", i}, {"node_cap", budget.node_cap}});
        trees.push_back(std::move(*t));
      } else if (kind == "prefix") {
        trees.push_back(sample_gw_prefix(p, rng, b));
      } else if (kind == "immortal") {
        trees.push_back(sample_immortal_prefix(p, rng, b));
      } else {
        auto s = kind == "conditioned" ? sample_conditioned(p, *f, *cond, rng, bud)
                                       : sample_conditioned_prefix(p, *f, *cond, b, rng, bud);
        attempts += s.attempts;
        if (!s.tree)
          throw BudgetExhausted("rejection budget exhausted",
                                {{"sample", i}, {"attempts", s.attempts}, {"max_attempts", budget.max_attempts}});
        trees.push_back(std::move(*s.tree));
      }
    }
    std::ostringstream dump;
    std::vector<std::string> header{"branchlim sample", "offspring " + p.describe(), "kind " + kind,
                                    "seed " + std::to_string(seed)};
    if (cond) header.push_back("conditioning " + f->name() + " " + cond->to_string());
    write_dump(dump, header, trees);
    a.files.emplace_back("trees.txt", dump.str());
    csv::Writer w;
    w.row({"index", "nodes", "height", "width", "max_out_degree"});
    for (std::size_t i = 0; i < trees.size(); ++i)
      w.field(i).field(trees[i].size()).field(functional(trees[i], FunctionalTag::height()))
          .field(functional(trees[i], FunctionalTag::width()))
          .field(functional(trees[i], FunctionalTag::max_out_degree())).end();
    a.files.emplace_back("samples.csv", w.str());
    a.metadata = {{"kind", kind}, {"count", count}, {"attempts", attempts}};
    a.summary = "sampled " + std::to_string(count) + " trees (" + kind + ")\n";
    return a;
  };
}

Plan plan_converge(Obj& c, const Context& ctx, bool point) {
  const auto p = parse_offspring(c);
  const auto f = parse_functional(c);
  const auto b = c.req<std::size_t>("b");
  const auto grid = positive_grid(c, "n_grid");
  const auto lo = parse_lab(c, ctx);
  return [=] {
    const auto rep = point ? run_point_convergence(p, f, b, grid, lo) : run_tail_convergence(p, f, b, grid, lo);
    check_budget_rows(rep);
    Artifacts a;
    a.files.emplace_back("convergence.csv", rep.to_csv());
    a.metadata = rep.metadata();
    a.summary = std::string(point ? "point" : "tail") + " conditioning, " + f.name() + ", b=" + std::to_string(b) +
                "\n" + tv_summary(rep);
    return a;
  };
}

Plan plan_ratio(Obj& c, const Context& ctx) {
  const auto p = parse_offspring(c);
  const auto f = parse_functional(c);
  const auto k_list = c.opt<std::vector<std::size_t>>("k_list", {2, 3});
  const auto r_list = c.opt<std::vector<std::size_t>>("r_list", {1});
  const auto grid = positive_grid(c, "n_grid");
  const auto lo = parse_lab(c, ctx);
  for (auto k : k_list) require(k >= 1, "k_list entries must be >= 1");
  return [=] {
    const auto rep = run_ratio_limits(p, f, k_list, r_list, grid, lo);
    Artifacts a;
    a.files.emplace_back("ratio.csv", rep.to_csv());
    a.metadata = rep.metadata();
    std::ostringstream os;
    for (const auto& r : rep.ratio_rows)
      os << "  n=" << r.n << " k=" << r.k << "  tail ratio " << csv::num(r.tail_ratio) << '\n';
    a.summary = "ratio limits, " + f.name() + "\n" + os.str();
    return a;
  };
}

Plan plan_probe(Obj& c, const Context& ctx) {
  const auto p = parse_offspring(c);
  const auto f = parse_functional(c);
  const auto b = c.req<std::size_t>("b");
  const auto grid = positive_grid(c, "n_grid");
  auto lo = parse_lab(c, ctx);
  return [=] {
    const auto rep = probe_conjectures(p, f, b, grid, lo);
    check_budget_rows(rep);
    Artifacts a;
    a.files.emplace_back("probe.csv", rep.to_csv());
    a.metadata = rep.metadata();
    a.summary = "exploratory probe, " + f.name() + ", b=" + std::to_string(b) + "\n" + tv_summary(rep);
    return a;
  };
}

// ---------------------------------------------------------------------------

Plan plan_cb(Obj& c, const Context& ctx) {
  const auto m = parse_mechanism(c);
  const auto check = c.req<std::string>("check");
  const double x = c.opt<double>("x", 1.0);
  require(x > 0.0, "x must be > 0");
  const auto seed = ctx.seed;
  const auto workers = ctx.workers;
  if (check == "lccb") {
    LccbOptions o;
    o.b = c.opt<double>("b", o.b);
    o.r_grid = number_list(c, "r_grid", o.r_grid);
    o.functional = parse_or_reject("functional", [&] {
      return parse_cb_functional(c.opt<std::string>("functional", "sigma"));
    });
    o.lambdas = number_list(c, "lambdas", o.lambdas);
    o.reps = c.opt<std::size_t>("reps", o.reps);
    o.dt = c.opt<double>("dt", o.dt);
    o.max_time = c.opt<double>("max_time", o.max_time);
    o.max_attempts = c.opt<std::size_t>("max_attempts", o.max_attempts);
    o.seed = seed;
    o.workers = workers;
    return [=] {
      const auto rep = verify_lccb(m, x, o);
      if (rep.exhausted)
        throw BudgetExhausted("attempt budget exhausted", {{"max_attempts", o.max_attempts}, {"reps", o.reps}});
      Artifacts a;
      a.files.emplace_back("lccb.csv", rep.to_csv());
      a.metadata = {{"mechanism", m.to_json()}, {"x", x}, {"unresolved", rep.unresolved}};
      std::ostringstream os;
      for (const auto& r : rep.rows)
        os << "  r=" << r.r << " lambda=" << r.lambda << "  lhs " << csv::num(r.lhs) << "  rhs " << csv::num(r.rhs)
           << "  gap/se " << csv::num(r.se > 0 ? r.gap / r.se : 0.0) << '\n';
      a.summary = "LCCB check\n" + os.str();
      return a;
    };
  }
  if (check == "scale") {
    const auto xs = number_list(c, "x_grid", {0.5, 1.0, 2.0});
    const auto rs = number_list(c, "r_grid", {10.0, 100.0});
    require(!m.has_jumps(), "scale check needs pi = zero");
    return [=] {
      csv::Writer w;
      w.row({"r", "x", "ratio", "limit"});
      for (const auto& r : scale_ratio_report(m, xs, rs)) w.field(r.r).field(r.x).field(r.ratio).field(r.limit).end();
      Artifacts a;
      a.files.emplace_back("scale_ratio.csv", w.str());
      a.metadata = {{"mechanism", m.to_json()}};
      a.summary = "scale-function ratios written\n";
      return a;
    };
  }
  if (check == "sigma") {
    const auto rs = number_list(c, "r_grid", {100.0});
    const auto xs = number_list(c, "x_grid", {1.0});
    const double shift = c.opt<double>("r_shift", 5.0);
    const auto reps = c.opt<std::size_t>("reps", 100'000);
    const double dt = c.opt<double>("dt", 0.05);
    require(m.critical() && !m.has_jumps(), "sigma check needs the critical Feller mechanism");
    return [=] {
      const auto rep = sigma_tail_checks(m.beta, rs, xs, shift, reps, dt, seed, workers);
      Artifacts a;
      a.files.emplace_back("sigma_tail.csv", rep.to_csv());
      a.metadata = {{"mechanism", m.to_json()}};
      a.summary = "sigma tail ratios written\n";
      return a;
    };
  }
  if (check == "max-type") {
    const auto rs = number_list(c, "r_grid", {0.5, 1.0, 2.0});
    const auto reps = c.opt<std::size_t>("reps", 100'000);
    const double dt = c.opt<double>("dt", 0.01);
    require(!m.has_jumps(), "max-type check needs pi = zero");
    return [=] {
      csv::Writer w;
      w.row({"r", "p_hat", "se", "predicted"});
      for (const auto& r : max_type_cb(m.alpha, m.beta, x, rs, reps, dt, seed, workers))
        w.field(r.r).field(r.p_hat).field(r.se).field(r.predicted).end();
      Artifacts a;
      a.files.emplace_back("max_type.csv", w.str());
      a.metadata = {{"mechanism", m.to_json()}, {"x", x}};
      a.summary = "max-type identity table written\n";
      return a;
    };
  }
  if (check == "paths") {
    const auto scheme = c.opt<std::string>("scheme", m.has_jumps() ? "jumpdiff" : "feller");
    const TimeGrid grid{c.opt<double>("dt", 0.01), c.opt<std::size_t>("steps", 1000)};
    const auto count = c.opt<std::size_t>("count", 10);
    require(scheme == "feller" || scheme == "jumpdiff" || scheme == "cbi", "scheme must be feller, jumpdiff or cbi");
    require(scheme != "feller" || !m.has_jumps(), "the exact Feller scheme needs pi = zero");
    return [=] {
      csv::Writer w, jw;
      w.row({"path", "i", "t", "value"});
      jw.row({"path", "t", "size", "post"});
      csv::Writer fw;
      fw.row({"path", "W", "sigma", "M", "extinction_time", "truncated", "killed"});
      const Rng base = Rng(seed).split(0x9A7);
      for (std::size_t k = 0; k < count; ++k) {
        Rng rng = base.split(k);
        const SamplePath s = scheme == "feller"   ? sample_feller_cb(m.alpha, m.beta, x, grid, rng)
                             : scheme == "cbi" ? sample_cbi(m, x, grid, rng)
                                                 : sample_jumpdiff_cb(m, x, grid, rng);
        for (std::size_t i = 0; i < s.values.size(); ++i)
          w.field(k).field(i).field(static_cast<double>(i) * s.dt).field(s.values[i]).end();
        for (const auto& j : s.jumps) jw.field(k).field(j.time).field(j.size).field(j.post).end();
        const auto f = cb_functionals(s);
        fw.field(k).field(f.W).field(f.sigma).field(f.M).field(f.extinction_time).field(f.truncated)
            .field(s.killed).end();
      }
      Artifacts a;
      a.files.emplace_back("paths.csv", w.str());
      a.files.emplace_back("jumps.csv", jw.str());
      a.files.emplace_back("functionals.csv", fw.str());
      a.metadata = {{"mechanism", m.to_json()}, {"scheme", scheme}, {"x", x}};
      a.summary = std::to_string(count) + " " + scheme + " paths written\n";
      return a;
    };
  }
  throw ValidationError("check must be lccb, scale, sigma, max-type or paths");
}

// ---------------------------------------------------------------------------

HeightParams parse_height(Obj& c) {
  HeightParams hp;
  hp.alpha = c.opt<double>("alpha", 0.0);
  hp.beta = c.opt<double>("beta", 1.0);
  hp.dt = c.opt<double>("dt", 1e-3);
  require(hp.alpha >= 0.0 && hp.beta > 0.0 && hp.dt > 0.0, "need alpha >= 0, beta > 0, dt > 0");
  return hp;
}

std::string excursion_csv(const std::vector<ExcursionRecord>& recs, const std::vector<double>& levels) {
  csv::Writer w;
  w.field(std::string("zeta")).field(std::string("sup")).field(std::string("sigma"));
  for (double b : levels) w.field("L_" + csv::num(b));
  w.field(std::string("tau")).end();
  for (const auto& e : recs) {
    w.field(e.zeta).field(e.sup).field(e.sigma);
    for (double l : e.local_times) w.field(l);
    w.field(e.tau).end();
  }
  return w.str();
}

std::string float32_dump(const std::vector<ExcursionRecord>& recs) {
  // Per record: uint64 length then float32 samples, little-endian host order.
  std::string out;
  for (const auto& e : recs) {
    const std::uint64_t n = e.H.size();
    out.append(reinterpret_cast<const char*>(&n), sizeof n);
    for (double h : e.H) {
      const float f = static_cast<float>(h);
      out.append(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  return out;
}

Plan plan_continuum(Obj& c, const Context& ctx) {
  const auto check = c.req<std::string>("check");
  const auto seed = ctx.seed;
  const auto workers = ctx.workers;
  if (check == "excursions") {
    const auto hp = parse_height(c);
    const double total = c.opt<double>("total_time", 10.0);
    ExcursionOptions eo;
    eo.levels = c.opt<std::vector<double>>("levels", {});
    eo.eps = c.opt<double>("eps", eo.eps);
    eo.tau_level = c.opt<double>("tau_level", kInf);
    eo.keep_path = c.opt<bool>("dump_paths", false);
    const double min_sup = c.opt<double>("min_sup", 0.0);
    return [=] {
      std::vector<ExcursionRecord> recs;
      Rng rng = Rng(seed).split(0xE5C);
      const auto st = sample_height_excursions(hp, total, rng, [&](ExcursionRecord&& e) {
        if (e.sup >= min_sup) recs.push_back(std::move(e));
      }, eo);
      Artifacts a;
      a.files.emplace_back("excursions.csv", excursion_csv(recs, eo.levels));
      if (eo.keep_path) a.files.emplace_back("paths.f32", float32_dump(recs));
      a.metadata = {{"alpha", hp.alpha},          {"beta", hp.beta},   {"dt", hp.dt},
                    {"excursions", st.excursions}, {"kept", recs.size()}, {"local_time_zero", st.local_time_zero}};
      a.summary = std::to_string(recs.size()) + " excursions written\n";
      return a;
    };
  }
  if (check == "bismut") {
    BismutOptions o;
    o.alpha = c.opt<double>("alpha", o.alpha);
    o.beta = c.opt<double>("beta", o.beta);
    o.b = c.opt<double>("b", o.b);
    o.b0 = c.opt<double>("b0", o.b0);
    o.eps = c.opt<double>("eps", o.eps);
    o.dt = c.opt<double>("dt", o.dt);
    o.tau_test = c.opt<double>("tau_test", o.tau_test);
    o.reps = c.opt<std::size_t>("reps", o.reps);
    o.immortal_reps = c.opt<std::size_t>("immortal_reps", o.immortal_reps);
    o.seed = seed;
    o.workers = workers;
    return [=] {
      const auto rep = verify_bismut(o);
      Artifacts a;
      a.files.emplace_back("bismut.csv", rep.to_csv());
      a.metadata = {{"a0", rep.a0}, {"normalizer", rep.normalizer}, {"excursions", rep.excursions}};
      std::ostringstream os;
      for (const auto& r : rep.rows) os << "  " << r.test << "  relative gap " << csv::num(r.rel_gap) << '\n';
      a.summary = "Bismut ratio checks\n" + os.str();
      return a;
    };
  }
  if (check == "theorem-l") {
    TheoremLOptions o;
    o.functional = parse_or_reject("functional", [&] {
      return parse_continuum_functional(c.opt<std::string>("functional", "sup"));
    });
    o.beta = c.opt<double>("beta", o.beta);
    o.b = c.opt<double>("b", o.b);
    o.r_grid = number_list(c, "r_grid", o.r_grid);
    o.dt = c.opt<double>("dt", o.dt);
    o.a0 = c.opt<double>("a0", o.a0);
    o.eps = c.opt<double>("eps", o.eps);
    o.reps = c.opt<std::size_t>("reps", o.reps);
    o.immortal_reps = c.opt<std::size_t>("immortal_reps", o.immortal_reps);
    o.max_time = c.opt<double>("max_time", o.max_time);
    o.seed = seed;
    o.workers = workers;
    return [=] {
      const auto rep = verify_theorem_L(o);
      Artifacts a;
      a.files.emplace_back("theorem_l.csv", rep.to_csv());
      a.metadata = {{"functional", rep.functional}, {"excursions", rep.excursions}, {"capped", rep.capped},
                    {"decreasing", rep.decreasing()}};
      std::ostringstream os;
      for (const auto& r : rep.rows)
        os << "  r=" << r.r << "  accepted " << r.accepted << "  KS " << csv::num(r.ks_tau) << '\n';
      a.summary = "conditioned tau_b law vs immortal (" + rep.functional + ")\n" + os.str();
      return a;
    };
  }
  if (check == "immortal" || check == "condensation") {
    const auto hp = parse_height(c);
    const double horizon = c.opt<double>("horizon", 1.0);
    const auto count = c.opt<std::size_t>("count", 1);
    require(horizon > 0.0, "horizon must be > 0");
    return [=] {
      csv::Writer w;
      w.row({"path", "i", "t", "left", "right", "cap"});
      const Rng base = Rng(seed).split(0x1BB);
      for (std::size_t k = 0; k < count; ++k) {
        Rng rng = base.split(k);
        const auto s = check == "immortal" ? immortal_heights(hp.alpha, hp.beta, hp.dt, horizon, rng)
                                           : condensation_heights(hp.alpha, hp.beta, hp.dt, horizon, rng);
        for (std::size_t i = 0; i < s.left.size(); ++i)
          w.field(k).field(i).field(static_cast<double>(i) * s.dt).field(s.left[i]).field(s.right[i]).field(s.cap)
              .end();
      }
      Artifacts a;
      a.files.emplace_back("heights.csv", w.str());
      a.metadata = {{"alpha", hp.alpha}, {"beta", hp.beta}, {"dt", hp.dt}, {"horizon", horizon}};
      a.summary = std::to_string(count) + " " + check + " height paths written\n";
      return a;
    };
  }
  if (check == "delta-band") {
    const double beta = c.opt<double>("beta", 1.0);
    const double dt = c.opt<double>("dt", 1e-4);
    const auto reps = c.opt<std::size_t>("reps", 20'000);
    return [=] {
      const auto rows = delta_band_study(beta, dt, reps, seed, workers);
      Artifacts a;
      a.files.emplace_back("delta_band.csv", delta_band_csv(rows));
      a.summary = "refinement study dt vs dt/4 written\n";
      return a;
    };
  }
  if (check == "max-type") {
    const auto hp = parse_height(c);
    const double x = c.opt<double>("x", 1.0);
    const auto rs = number_list(c, "r_grid", {0.5, 1.0, 2.0});
    const auto reps = c.opt<std::size_t>("reps", 50'000);
    const double a0 = c.opt<double>("a0", 0.1);
    return [=] {
      csv::Writer w;
      w.row({"r", "p_hat", "se", "predicted", "predicted_se"});
      for (const auto& r : max_type_continuum(hp, x, rs, reps, a0, seed, workers))
        w.field(r.r).field(r.p_hat).field(r.se).field(r.predicted).field(r.predicted_se).end();
      Artifacts a;
      a.files.emplace_back("max_type.csv", w.str());
      a.summary = "continuum max-type identity table written\n";
      return a;
    };
  }
  if (check == "height-ratio") {
    const auto hp = parse_height(c);
    const auto bs = number_list(c, "b_list", {0.5, 1.0});
    const double total = c.opt<double>("total_time", 1000.0);
    return [=] {
      csv::Writer w;
      w.row({"b", "count_b", "count_2b", "ratio", "se"});
      for (const auto& r : height_ratio_report(hp, bs, total, seed, workers))
        w.field(r.b).field(r.count_b).field(r.count_2b).field(r.ratio).field(r.se).end();
      Artifacts a;
      a.files.emplace_back("height_ratio.csv", w.str());
      a.summary = "long-path tail ratios written\n";
      return a;
    };
  }
  throw ValidationError(
      "check must be excursions, bismut, theorem-l, immortal, condensation, delta-band, max-type or height-ratio");
}

// ---------------------------------------------------------------------------

Plan plan_acceptance(Obj& c, const Context& ctx) {
  std::vector<int> ids = c.opt<std::vector<int>>("criteria", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  for (int id : ids) require(id >= 1 && id <= acceptance::kCriteria, "criteria ids must be in 1..10");
  acceptance::Options o;
  o.seed = ctx.seed;
  o.workers = ctx.workers;
  o.scale = c.opt<double>("scale", 1.0);
  require(o.scale > 0.0, "scale must be > 0");
  return [=] {
    Artifacts a;
    json all = json::array();
    std::ostringstream os;
    csv::Writer w;
    w.row({"criterion", "title", "pass", "seconds", "budget_seconds"});
    for (int id : ids) {
      const auto r = acceptance::run(id, o);
      os << r.summary_line() << '\n';
      all.push_back(r.to_json());
      w.field(static_cast<std::size_t>(id)).field(r.title).field(r.pass).field(r.seconds).field(r.budget_seconds).end();
      for (const auto& [name, body] : r.tables) a.files.emplace_back("criterion" + std::to_string(id) + "_" + name, body);
      a.failed = a.failed || !r.pass;
    }
    a.files.emplace_back("acceptance.csv", w.str());
    a.metadata = {{"criteria", all}, {"scale", o.scale}};
    a.summary = os.str();
    return a;
  };
}

// ---------------------------------------------------------------------------

struct Prepared {
  json config;
  Context ctx;
  fs::path out;
  Plan plan;
};

json load_config(const Invocation& inv) {
  if (inv.config_path) {
    std::ifstream in(*inv.config_path);
    if (!in) throw ValidationError("cannot read config file '" + *inv.config_path + "'");
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("malformed config: ") + e.what());
    }
  }
  if (inv.config) return *inv.config;
  return json::object();
}

Prepared prepare(const Invocation& inv) {
  const auto& cmds = commands();
  if (std::find(cmds.begin(), cmds.end(), inv.command) == cmds.end())
    throw ValidationError("unknown subcommand '" + inv.command + "'");
  Prepared pr;
  pr.config = load_config(inv);
  Obj c(pr.config, "config");
  if (c.has("experiment")) {
    const auto e = c.req<std::string>("experiment");
    require(e == inv.command, "config experiment '" + e + "' does not match subcommand '" + inv.command + "'");
  }
  // The seed is mandatory, except for the pinned acceptance suite.
  if (inv.seed) {
    if (c.has("seed")) c.req<std::uint64_t>("seed");
    pr.ctx.seed = *inv.seed;
  } else if (c.has("seed")) {
    pr.ctx.seed = c.req<std::uint64_t>("seed");
  } else if (inv.command == "acceptance") {
    pr.ctx.seed = acceptance::Options{}.seed;
  } else {
    throw ValidationError("a seed is required (config field 'seed' or --seed)");
  }
  const auto cfg_workers = c.opt<std::size_t>("workers", 0);
  pr.ctx.workers = inv.workers ? *inv.workers : (cfg_workers ? cfg_workers : default_workers());
  require(pr.ctx.workers >= 1, "workers must be >= 1");
  const auto cfg_out = c.opt<std::string>("out", "");
  pr.out = inv.out ? fs::path(*inv.out) : (cfg_out.empty() ? fs::path("results") / inv.command : fs::path(cfg_out));

  const std::string& cmd = inv.command;
  if (cmd == "exact") pr.plan = plan_exact(c, pr.ctx);
  else if (cmd == "sample") pr.plan = plan_sample(c, pr.ctx);
  else if (cmd == "converge-tail") pr.plan = plan_converge(c, pr.ctx, false);
  else if (cmd == "converge-point") pr.plan = plan_converge(c, pr.ctx, true);
  else if (cmd == "ratio") pr.plan = plan_ratio(c, pr.ctx);
  else if (cmd == "cb-verify") pr.plan = plan_cb(c, pr.ctx);
  else if (cmd == "continuum") pr.plan = plan_continuum(c, pr.ctx);
  else if (cmd == "probe-conjecture") pr.plan = plan_probe(c, pr.ctx);
  else pr.plan = plan_acceptance(c, pr.ctx);
  c.finish();
  pr.config["seed"] = pr.ctx.seed;
  return pr;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::binary);
  os << body;
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

json manifest(const Invocation& inv, const Prepared& pr, const std::string& status, double wall) {
  return {{"tool", "branchlim"},
          {"version", version()},
          {"command", inv.command},
          {"status", status},
          {"config", pr.config},
          {"seed", pr.ctx.seed},
          {"workers", pr.ctx.workers},
          {"started_utc", utc_now()},
          {"wall_seconds", wall},
          {"compiler", __VERSION__}};
}

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"exact",     "sample",    "converge-tail",    "converge-point", "ratio",
                                          "cb-verify", "continuum", "probe-conjecture", "acceptance"};
  return c;
}

std::string version() { return BRANCHLIM_VERSION; }

json validated_config(const Invocation& inv) { return prepare(inv).config; }

int run(const Invocation& inv, std::ostream& log) {
  Prepared pr;
  try {
    pr = prepare(inv);
  } catch (const ValidationError& e) {
    log << "validation error: " << e.what() << '\n';
    return kValidation;
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  std::error_code ec;
  const bool created = !fs::exists(pr.out);
  fs::create_directories(pr.out, ec);
  if (ec) {
    log << "cannot create output directory " << pr.out << ": " << ec.message() << '\n';
    return kValidation;
  }
  const fs::path staging = pr.out / (".staging-" + std::to_string(::getpid()));
  auto cleanup = [&] {
    fs::remove_all(staging, ec);
    if (created && fs::is_empty(pr.out, ec)) fs::remove(pr.out, ec);
  };
  try {
    fs::create_directories(staging);
    Artifacts a = pr.plan();
    json man = manifest(inv, pr, a.failed ? "criteria_failed" : "ok", wall());
    man["results"] = a.metadata;
    man["artifacts"] = json::array();
    for (const auto& [name, body] : a.files) {
      write_file(staging / name, body);
      man["artifacts"].push_back({{"file", name}, {"bytes", body.size()}});
    }
    write_file(staging / "manifest.json", man.dump(2) + "\n");
    for (const auto& entry : fs::directory_iterator(staging))
      fs::rename(entry.path(), pr.out / entry.path().filename());
    fs::remove_all(staging);
    log << a.summary << "artifacts in " << pr.out.string() << '\n';
    return a.failed ? kFailure : kOk;
  } catch (const BudgetExhausted& e) {
    cleanup();
    fs::create_directories(pr.out, ec);
    json man = manifest(inv, pr, "budget_exhausted", wall());
    man["diagnostic"] = e.diagnostic;
    man["diagnostic"]["message"] = e.what();
    write_file(pr.out / "manifest.json", man.dump(2) + "\n");
    log << "budget exhausted: " << e.what() << "; diagnostic manifest in " << pr.out.string() << '\n';
    return kBudget;
  } catch (const BudgetExceeded& e) {
    cleanup();
    fs::create_directories(pr.out, ec);
    json man = manifest(inv, pr, "budget_exhausted", wall());
    man["diagnostic"] = {{"message", e.what()}};
    write_file(pr.out / "manifest.json", man.dump(2) + "\n");
    log << "budget exhausted: " << e.what() << "; diagnostic manifest in " << pr.out.string() << '\n';
    return kBudget;
  } catch (const std::invalid_argument& e) {
    cleanup();
    log << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::domain_error& e) {
    cleanup();
    log << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    cleanup();
    log << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace branchlim::runner
