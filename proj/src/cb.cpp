#include "branchlim/cb.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "branchlim/csv.hpp"

namespace branchlim {

namespace {

constexpr std::size_t kChunks = 16;
constexpr std::uint64_t kTagLccb = 0x4C4343;
constexpr std::uint64_t kTagSigma = 0x5347;
constexpr std::uint64_t kTagMax = 0x4D4158;

// e^{-u} - 1 + u, accurate for small u.
double comp_exp(double u) {
  if (u < 1e-4) return u * u * (0.5 - u / 6.0);
  return std::expm1(-u) + u;
}

template <class F>
double pareto_integral(const JumpLaw& j, F&& g) {
  boost::math::quadrature::exp_sinh<double> q;
  const double c = j.gamma * std::pow(j.min, j.gamma);
  auto f = [&](double t) { return g(t) * c * std::pow(t, -j.gamma - 1.0); };
  return q.integrate(f, j.min, std::numeric_limits<double>::infinity());
}

}  // namespace

double JumpLaw::sample(Rng& rng) const {
  if (kind == Kind::Exp) return mean * rng.exponential();
  return min * std::pow(rng.uniform_pos(), -1.0 / gamma);
}

double JumpLaw::first_moment() const { return kind == Kind::Exp ? mean : gamma * min / (gamma - 1.0); }

double JumpLaw::compensated_laplace(double l) const {
  if (l == 0.0) return 0.0;
  if (kind == Kind::Exp) {
    const double lm = l * mean;
    return lm * lm / (1.0 + lm);
  }
  return pareto_integral(*this, [l](double t) { return comp_exp(l * t); });
}

double JumpLaw::compensated_laplace_derivative(double l) const {
  if (l == 0.0) return 0.0;
  if (kind == Kind::Exp) {
    const double s = 1.0 + l * mean;
    return mean * (1.0 - 1.0 / (s * s));
  }
  return pareto_integral(*this, [l](double t) { return -t * std::expm1(-l * t); });
}

BranchingMechanism BranchingMechanism::feller(double alpha, double beta) {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("alpha and beta must be >= 0");
  BranchingMechanism m;
  m.alpha = alpha;
  m.beta = beta;
  return m;
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw std::invalid_argument(std::string("unknown field '") + key + "' in " + what);
  }
}

}  // namespace

BranchingMechanism BranchingMechanism::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"alpha", "beta", "pi"}, "mechanism");
  auto m = feller(j.at("alpha").get<double>(), j.at("beta").get<double>());
  if (!j.contains("pi")) return m;
  const auto& pi = j.at("pi");
  const auto kind = pi.at("kind").get<std::string>();
  if (kind == "zero") {
    reject_unknown(pi, {"kind"}, "pi");
    return m;
  }
  if (kind != "cpp") throw std::invalid_argument("pi.kind must be 'zero' or 'cpp'");
  reject_unknown(pi, {"kind", "rate", "jumps"}, "pi");
  m.jump_rate = pi.at("rate").get<double>();
  if (!(m.jump_rate >= 0.0)) throw std::invalid_argument("pi.rate must be >= 0");
  const auto& js = pi.at("jumps");
  JumpLaw law;
  const auto jk = js.at("kind").get<std::string>();
  if (jk == "exp") {
    reject_unknown(js, {"kind", "mean"}, "jumps");
    law.kind = JumpLaw::Kind::Exp;
    law.mean = js.at("mean").get<double>();
    if (!(law.mean > 0.0)) throw std::invalid_argument("jump mean must be > 0");
  } else if (jk == "pareto") {
    reject_unknown(js, {"kind", "gamma", "min"}, "jumps");
    law.kind = JumpLaw::Kind::Pareto;
    law.gamma = js.at("gamma").get<double>();
    law.min = js.at("min").get<double>();
    // int (t ^ t^2) pi(dt) < infinity needs a finite first moment.
    if (!(law.gamma > 1.0) || !(law.min > 0.0)) throw std::invalid_argument("pareto jumps need gamma > 1, min > 0");
  } else {
    throw std::invalid_argument("jumps.kind must be 'exp' or 'pareto'");
  }
  m.jumps = law;
  return m;
}

nlohmann::json BranchingMechanism::to_json() const {
  nlohmann::json j{{"alpha", alpha}, {"beta", beta}};
  if (!jumps) {
    j["pi"] = {{"kind", "zero"}};
    return j;
  }
  nlohmann::json js;
  if (jumps->kind == JumpLaw::Kind::Exp) js = {{"kind", "exp"}, {"mean", jumps->mean}};
  else js = {{"kind", "pareto"}, {"gamma", jumps->gamma}, {"min", jumps->min}};
  j["pi"] = {{"kind", "cpp"}, {"rate", jump_rate}, {"jumps", js}};
  return j;
}

double BranchingMechanism::phi(double l) const {
  double v = alpha * l + beta * l * l;
  if (has_jumps()) v += jump_rate * jumps->compensated_laplace(l);
  return v;
}

double BranchingMechanism::phi_prime(double l) const {
  double v = alpha + 2.0 * beta * l;
  if (has_jumps()) v += jump_rate * jumps->compensated_laplace_derivative(l);
  return v;
}

double BranchingMechanism::phi_pq(double p, double q) const {
  if (std::abs(p - q) <= 1e-9 * std::max(1.0, std::abs(p))) return phi_prime(0.5 * (p + q)) - alpha;
  return (phi(p) - phi(q)) / (p - q) - alpha;
}

namespace {

// (v, dv/dl) along v' = -Phi(v), u' = -Phi'(v) u.
std::pair<double, double> integrate_v(const BranchingMechanism& m, double l, double t) {
  using State = std::array<double, 2>;
  namespace odeint = boost::numeric::odeint;
  State s{l, 1.0};
  if (t <= 0.0) return {s[0], s[1]};
  auto rhs = [&](const State& x, State& dx, double) {
    const double v = std::max(x[0], 0.0);
    dx[0] = -m.phi(v);
    dx[1] = -m.phi_prime(v) * x[1];
  };
  odeint::integrate_adaptive(odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(1e-10, 1e-10), rhs, s, 0.0,
                             t, std::min(t, 1e-3));
  return {std::max(s[0], 0.0), s[1]};
}

}  // namespace

double cb_v(const BranchingMechanism& m, double l, double t) {
  if (l < 0.0 || t < 0.0) throw std::invalid_argument("cb_v needs l, t >= 0");
  if (l == 0.0) return 0.0;
  if (m.has_jumps()) return integrate_v(m, l, t).first;
  if (m.alpha == 0.0) return l / (1.0 + m.beta * l * t);
  const double e = std::exp(-m.alpha * t);
  return m.alpha * l * e / (m.alpha - m.beta * l * std::expm1(-m.alpha * t));
}

double cb_v_dlambda(const BranchingMechanism& m, double l, double t) {
  if (l < 0.0 || t < 0.0) throw std::invalid_argument("cb_v_dlambda needs l, t >= 0");
  if (m.has_jumps()) return integrate_v(m, l, t).second;
  if (m.alpha == 0.0) {
    const double d = 1.0 + m.beta * l * t;
    return 1.0 / (d * d);
  }
  const double e = std::exp(-m.alpha * t);
  const double d = m.alpha - m.beta * l * std::expm1(-m.alpha * t);
  return m.alpha * m.alpha * e / (d * d);
}

namespace {

// Exact Feller transition over dt: E_y exp(-l Y) = exp(-y c l / (1 + d l)),
// i.e. Gamma(N, d) with N ~ Poisson(y c / d).
struct FellerKernel {
  double alpha = 0.0, beta = 0.0, dt = 0.0, c = 0.0, d = 0.0;

  FellerKernel() = default;
  FellerKernel(double a, double b, double step) : alpha(a), beta(b), dt(step) {
    if (!(b > 0.0)) throw std::invalid_argument("Feller sampler needs beta > 0");
    if (!(step > 0.0)) throw std::invalid_argument("time step must be > 0");
    c = a == 0.0 ? 1.0 : std::exp(-a * step);
    d = a == 0.0 ? b * step : -b * std::expm1(-a * step) / a;
  }

  double step(double y, Rng& rng) const {
    if (y <= 0.0) return 0.0;
    std::poisson_distribution<long long> pois(y * c / d);
    const long long n = pois(rng);
    if (n == 0) return 0.0;
    std::gamma_distribution<double> g(static_cast<double>(n), d);
    return g(rng);
  }

  // Absorption offset inside a step from y > 0 that ends at 0:
  // P[T <= s | Y_dt = 0] = exp(-y (v_s(inf) - v_dt(inf))).
  double absorption_offset(double y, Rng& rng) const {
    const double lu = std::log(rng.uniform_pos());
    if (alpha == 0.0) return 1.0 / (1.0 / dt - beta * lu / y);
    const double q = alpha / (beta * std::expm1(alpha * dt)) - lu / y;
    return std::log1p(alpha / (beta * q)) / alpha;
  }
};

// One path of a CB or CBI process on a uniform grid with running functionals.
class CbWalker {
 public:
  enum class Scheme { ExactFeller, Euler, ExactCbi };

  CbWalker(const BranchingMechanism& m, double x, double dt, Scheme scheme, Rng& rng)
      : m_(m), dt_(dt), scheme_(scheme), y_(x), W_(x) {
    if (!(x >= 0.0)) throw std::invalid_argument("initial mass must be >= 0");
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be > 0");
    if (scheme != Scheme::Euler) kernel_ = FellerKernel(m.alpha, m.beta, dt);
    if (scheme == Scheme::Euler) {
      const double m1 = m.has_jumps() ? m.jump_rate * m.jumps->first_moment() : 0.0;
      if (dt * (m.alpha + m1) >= 0.1) throw std::invalid_argument("time step too large for the Euler scheme");
      drift_ = m.alpha + m1;
    }
    if (scheme == Scheme::ExactCbi) {
      // Constant alpha in Phi' kills the process at rate alpha.
      kill_ = m.alpha > 0.0 ? rng.exponential(m.alpha) : std::numeric_limits<double>::infinity();
    }
    if (y_ == 0.0 && scheme != Scheme::ExactCbi) absorbed_ = true;
  }

  // Advances one step; returns false once absorbed or killed.
  bool step(Rng& rng, std::vector<JumpEvent>* log = nullptr) {
    if (absorbed_ || killed_) return false;
    const double t0 = t_;
    double y1 = 0.0;
    switch (scheme_) {
      case Scheme::ExactFeller:
        y1 = kernel_.step(y_, rng);
        if (y1 == 0.0) absorption_time_ = t0 + kernel_.absorption_offset(y_, rng);
        break;
      case Scheme::ExactCbi: {
        if (t0 + dt_ > kill_) {
          killed_ = true;
          return false;
        }
        y1 = kernel_.step(y_, rng);
        std::gamma_distribution<double> g(2.0, kernel_.d);
        y1 += g(rng);
        break;
      }
      case Scheme::Euler: {
        y1 = y_ - drift_ * y_ * dt_ + std::sqrt(2.0 * m_.beta * y_ * dt_) * rng.normal();
        if (m_.has_jumps()) {
          std::poisson_distribution<long long> pois(y_ * m_.jump_rate * dt_);
          const long long n = pois(rng);
          double post = y_;
          for (long long i = 0; i < n; ++i) {
            const double s = m_.jumps->sample(rng);
            post += s;
            y1 += s;
            M_ = std::max(M_, s);
            W_ = std::max(W_, post);
            if (log) log->push_back({t0, s, post});
          }
        }
        if (y1 <= 0.0) {
          y1 = 0.0;
          absorption_time_ = t0 + dt_;
        }
        break;
      }
    }
    sigma_ += 0.5 * dt_ * (y_ + y1);
    W_ = std::max(W_, y1);
    y_ = y1;
    ++i_;
    t_ = static_cast<double>(i_) * dt_;
    if (y1 == 0.0 && scheme_ != Scheme::ExactCbi) absorbed_ = true;
    return true;
  }

  double value() const { return y_; }
  double time() const { return t_; }
  std::size_t index() const { return i_; }
  bool absorbed() const { return absorbed_; }
  bool killed() const { return killed_; }
  double kill_time() const { return kill_; }
  double absorption_time() const { return absorption_time_; }
  double W() const { return W_; }
  double sigma() const { return sigma_; }
  double M() const { return M_; }

 private:
  const BranchingMechanism& m_;
  double dt_;
  Scheme scheme_;
  FellerKernel kernel_;
  double drift_ = 0.0;
  double kill_ = std::numeric_limits<double>::infinity();
  double y_;
  double t_ = 0.0;
  std::size_t i_ = 0;
  bool absorbed_ = false;
  bool killed_ = false;
  double absorption_time_ = 0.0;
  double W_ = 0.0;
  double sigma_ = 0.0;
  double M_ = 0.0;
};

SamplePath run_path(const BranchingMechanism& m, double x, const TimeGrid& grid, CbWalker::Scheme scheme, Rng& rng) {
  CbWalker w(m, x, grid.dt, scheme, rng);
  SamplePath path;
  path.dt = grid.dt;
  path.values.reserve(grid.steps + 1);
  path.values.push_back(x);
  for (std::size_t i = 0; i < grid.steps; ++i) {
    if (!w.step(rng, &path.jumps)) {
      if (w.killed()) break;
      path.values.push_back(0.0);  // absorbed: stays at 0
      continue;
    }
    path.values.push_back(w.value());
  }
  path.absorbed = w.absorbed();
  path.absorption_time = w.absorption_time();
  path.killed = w.killed();
  path.kill_time = w.killed() ? w.kill_time() : 0.0;
  return path;
}

}  // namespace

SamplePath sample_feller_cb(double alpha, double beta, double x, const TimeGrid& grid, Rng& rng) {
  const auto m = BranchingMechanism::feller(alpha, beta);
  return run_path(m, x, grid, CbWalker::Scheme::ExactFeller, rng);
}

SamplePath sample_jumpdiff_cb(const BranchingMechanism& m, double x, const TimeGrid& grid, Rng& rng) {
  return run_path(m, x, grid, CbWalker::Scheme::Euler, rng);
}

SamplePath sample_cbi(const BranchingMechanism& m, double x, const TimeGrid& grid, Rng& rng) {
  if (m.has_jumps()) throw std::invalid_argument("CBI sampling is exact only for jump-free mechanisms");
  return run_path(m, x, grid, CbWalker::Scheme::ExactCbi, rng);
}

CbFunctionals cb_functionals(const SamplePath& path) {
  CbFunctionals f;
  const auto& v = path.values;
  if (v.empty()) return f;
  std::size_t end = v.size() - 1;
  bool hit_zero = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) {
      end = i;
      hit_zero = true;
      break;
    }
  }
  for (std::size_t i = 0; i <= end; ++i) f.W = std::max(f.W, v[i]);
  for (std::size_t i = 0; i < end; ++i) f.sigma += 0.5 * path.dt * (v[i] + v[i + 1]);
  for (const auto& j : path.jumps) {
    f.W = std::max(f.W, j.post);
    f.M = std::max(f.M, j.size);
  }
  if (path.absorbed && path.absorption_time > 0.0) f.extinction_time = path.absorption_time;
  else f.extinction_time = static_cast<double>(end) * path.dt;
  f.truncated = !hit_zero && !path.absorbed;
  return f;
}

CbFunctional parse_cb_functional(const std::string& s) {
  if (s == "W" || s == "width") return CbFunctional::W;
  if (s == "sigma" || s == "mass") return CbFunctional::Sigma;
  if (s == "M" || s == "maxjump") return CbFunctional::M;
  throw std::invalid_argument("unknown CB functional '" + s + "' (W, sigma, M)");
}

std::string to_string(CbFunctional f) {
  switch (f) {
    case CbFunctional::W: return "W";
    case CbFunctional::Sigma: return "sigma";
    case CbFunctional::M: return "M";
  }
  return "?";
}

std::string LccbReport::to_csv() const {
  csv::Writer w;
  w.row({"r", "lambda", "accepted", "attempts", "lhs", "se", "rhs", "gap"});
  for (const auto& r : rows)
    w.field(r.r).field(r.lambda).field(r.accepted).field(r.attempts).field(r.lhs).field(r.se).field(r.rhs).field(
         r.gap).end();
  return w.str();
}

LccbReport verify_lccb(const BranchingMechanism& m, double x, const LccbOptions& opt) {
  if (!m.critical()) throw std::invalid_argument("LCCB verification needs a critical mechanism");
  if (!m.weak_condition()) throw std::invalid_argument("mechanism violates the beta > 0 condition");
  if (!(x > 0.0)) throw std::invalid_argument("x must be > 0");
  if (opt.r_grid.empty() || opt.lambdas.empty()) throw std::invalid_argument("empty r or lambda grid");
  if (opt.functional == CbFunctional::M && !m.has_jumps())
    throw std::invalid_argument("max-jump conditioning has probability zero without jumps");
  const double steps_b = opt.b / opt.dt;
  if (!(opt.b > 0.0) || std::abs(steps_b - std::round(steps_b)) > 1e-9)
    throw std::invalid_argument("b must be a positive multiple of dt");
  const auto nb = static_cast<std::size_t>(std::llround(steps_b));
  const auto scheme = m.has_jumps() ? CbWalker::Scheme::Euler : CbWalker::Scheme::ExactFeller;
  const double r_max = *std::max_element(opt.r_grid.begin(), opt.r_grid.end());
  const std::size_t R = opt.r_grid.size(), L = opt.lambdas.size();
  const std::size_t target = (opt.reps + kChunks - 1) / kChunks;
  const std::size_t attempt_cap = std::max<std::size_t>(1, opt.max_attempts / kChunks);

  struct Acc {
    std::vector<std::size_t> accepted;
    std::vector<double> s1, s2;
    std::size_t attempts = 0, unresolved = 0;
    bool exhausted = false;
  };
  std::vector<Acc> acc(kChunks);
  const Rng base = Rng(opt.seed).split(kTagLccb);
  parallel_for_chunks(kChunks, opt.workers, [&](std::size_t c) {
    Rng rng = base.split(c);
    Acc& a = acc[c];
    a.accepted.assign(R, 0);
    a.s1.assign(R * L, 0.0);
    a.s2.assign(R * L, 0.0);
    std::size_t done_at_max = 0;
    while (done_at_max < target) {
      if (a.attempts >= attempt_cap) {
        a.exhausted = true;
        break;
      }
      ++a.attempts;
      CbWalker w(m, x, opt.dt, scheme, rng);
      double yb = 0.0;
      auto value = [&] {
        switch (opt.functional) {
          case CbFunctional::W: return w.W();
          case CbFunctional::Sigma: return w.sigma();
          case CbFunctional::M: return w.M();
        }
        return 0.0;
      };
      while (true) {
        if (w.index() == nb) yb = w.value();
        const bool decided = w.absorbed() || value() > r_max;
        if (decided && w.index() >= nb) break;
        if (w.time() > opt.max_time) {
          ++a.unresolved;
          break;
        }
        w.step(rng);
        if (w.absorbed() && w.index() < nb) break;  // Y_b = 0
      }
      const double A = value();
      for (std::size_t i = 0; i < R; ++i) {
        if (!(A > opt.r_grid[i])) continue;
        ++a.accepted[i];
        for (std::size_t l = 0; l < L; ++l) {
          const double F = std::exp(-opt.lambdas[l] * yb);
          a.s1[i * L + l] += F;
          a.s2[i * L + l] += F * F;
        }
      }
      if (A > r_max) ++done_at_max;
    }
  });

  LccbReport rep;
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t l = 0; l < L; ++l) {
      LccbRow row;
      row.r = opt.r_grid[i];
      row.lambda = opt.lambdas[l];
      double s1 = 0.0, s2 = 0.0;
      for (const auto& a : acc) {
        row.accepted += a.accepted[i];
        s1 += a.s1[i * L + l];
        s2 += a.s2[i * L + l];
        if (i == 0 && l == 0) {
          row.attempts += a.attempts;
        }
      }
      if (row.accepted > 0) {
        const double n = static_cast<double>(row.accepted);
        row.lhs = s1 / n;
        const double var = std::max(0.0, s2 / n - row.lhs * row.lhs);
        row.se = row.accepted > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
      } else {
        row.lhs = std::numeric_limits<double>::quiet_NaN();
      }
      const double v = cb_v(m, row.lambda, opt.b);
      row.rhs = cb_v_dlambda(m, row.lambda, opt.b) * std::exp(-x * v);
      row.gap = row.lhs - row.rhs;
      rep.rows.push_back(row);
    }
  }
  std::size_t attempts = 0;
  for (const auto& a : acc) {
    attempts += a.attempts;
    rep.unresolved += a.unresolved;
    rep.exhausted = rep.exhausted || a.exhausted;
  }
  for (auto& row : rep.rows) row.attempts = attempts;
  return rep;
}

double scale_function(const BranchingMechanism& m, double r) {
  if (m.has_jumps()) throw std::invalid_argument("closed-form scale function needs pi = 0");
  if (m.alpha == 0.0 && m.beta == 0.0) throw std::invalid_argument("Phi must not vanish");
  if (r <= 0.0) return 0.0;
  if (m.beta == 0.0) return 1.0 / m.alpha;
  if (m.alpha == 0.0) return r / m.beta;
  return -std::expm1(-(m.alpha / m.beta) * r) / m.alpha;
}

double scale_increment(const BranchingMechanism& m, double r, double x) {
  if (m.has_jumps()) throw std::invalid_argument("closed-form scale function needs pi = 0");
  if (r - x < 0.0 || m.beta == 0.0) return scale_function(m, r) - scale_function(m, r - x);
  if (m.alpha == 0.0) return x / m.beta;
  const double c = m.alpha / m.beta;
  return std::exp(-c * r) * std::expm1(c * x) / m.alpha;
}

std::vector<ScaleRow> scale_ratio_report(const BranchingMechanism& m, const std::vector<double>& x_grid,
                                         const std::vector<double>& r_grid) {
  std::vector<ScaleRow> out;
  for (double r : r_grid) {
    for (double x : x_grid) {
      if (!(r > x) || !(r > 1.0)) continue;
      out.push_back({r, x, scale_increment(m, r, x) / scale_increment(m, r, 1.0), x});
    }
  }
  return out;
}

double sigma_tail_N(double beta, double r) { return 1.0 / std::sqrt(std::numbers::pi * beta * r); }

double sigma_tail_exact(double beta, double x, double r) { return std::erf(x / (2.0 * std::sqrt(beta * r))); }

double sigma_laplace_quadrature(double beta, double l) {
  const double c = 0.5 / std::sqrt(std::numbers::pi * beta);
  // r = s^2 removes the endpoint singularity.
  auto f = [&](double s) {
    const double u = l * s * s;
    if (u < 1e-8) return 2.0 * c * l * (1.0 - 0.5 * u);
    return 2.0 * c * -std::expm1(-u) / (s * s);
  };
  boost::math::quadrature::tanh_sinh<double> ts;
  boost::math::quadrature::exp_sinh<double> es;
  return ts.integrate(f, 0.0, 1.0) + es.integrate(f, 1.0, std::numeric_limits<double>::infinity());
}

std::string SigmaReport::to_csv() const {
  csv::Writer w;
  w.row({"x", "r", "r_shift", "paths", "p_hat", "p_se", "n_ratio", "n_ratio_se", "n_ratio_exact", "shift_ratio",
         "shift_se", "shift_exact"});
  for (const auto& r : rows)
    w.field(r.x).field(r.r).field(r.r_shift).field(r.paths).field(r.p_hat).field(r.p_se).field(r.n_ratio).field(
         r.n_ratio_se).field(r.n_ratio_exact).field(r.shift_ratio).field(r.shift_se).field(r.shift_exact).end();
  return w.str();
}

SigmaReport sigma_tail_checks(double beta, const std::vector<double>& r_grid, const std::vector<double>& x_grid,
                              double r_shift, std::size_t reps, double dt, std::uint64_t seed, std::size_t workers) {
  if (r_grid.empty() || x_grid.empty()) throw std::invalid_argument("empty r or x grid");
  if (reps < 2) throw std::invalid_argument("need at least 2 paths");
  const auto m = BranchingMechanism::feller(0.0, beta);
  const double r_max = *std::max_element(r_grid.begin(), r_grid.end());
  SigmaReport rep;
  for (double l : {0.5, 1.0, 2.0}) {
    rep.laplace_lambdas.push_back(l);
    rep.laplace_abs_error.push_back(std::abs(sigma_laplace_quadrature(beta, l) - std::sqrt(l / beta)));
  }
  const Rng base = Rng(seed).split(kTagSigma);
  for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
    const double x = x_grid[xi];
    std::vector<std::vector<double>> sig(kChunks);
    const Rng xbase = base.split(xi);
    parallel_for_chunks(kChunks, workers, [&](std::size_t c) {
      Rng rng = xbase.split(c);
      const std::size_t n = reps / kChunks + (c < reps % kChunks ? 1 : 0);
      sig[c].reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        CbWalker w(m, x, dt, CbWalker::Scheme::ExactFeller, rng);
        while (!w.absorbed() && w.sigma() <= r_max) w.step(rng);
        sig[c].push_back(w.sigma());
      }
    });
    const double n = static_cast<double>(reps);
    for (double r : r_grid) {
      std::size_t ca = 0, cb = 0;
      for (const auto& v : sig)
        for (double s : v) {
          ca += s > r;
          cb += s > r - r_shift;
        }
      SigmaRow row;
      row.x = x;
      row.r = r;
      row.r_shift = r_shift;
      row.paths = reps;
      const double pa = static_cast<double>(ca) / n, pb = static_cast<double>(cb) / n;
      row.p_hat = pa;
      row.p_se = std::sqrt(pa * (1.0 - pa) / n);
      const double nt = sigma_tail_N(beta, r);
      row.n_ratio = pa / nt;
      row.n_ratio_se = row.p_se / nt;
      row.n_ratio_exact = sigma_tail_exact(beta, x, r) / nt;
      row.shift_exact = sigma_tail_exact(beta, x, r - r_shift) / sigma_tail_exact(beta, x, r);
      if (pa > 0.0) {
        // Delta method for pb / pa with {sigma > r} inside {sigma > r - r'}.
        row.shift_ratio = pb / pa;
        const double va = pa * (1.0 - pa) / n, vb = pb * (1.0 - pb) / n, cov = pa * (1.0 - pb) / n;
        const double var = vb / (pa * pa) + pb * pb * va / (pa * pa * pa * pa) - 2.0 * pb * cov / (pa * pa * pa);
        row.shift_se = std::sqrt(std::max(0.0, var));
      } else {
        row.shift_ratio = std::numeric_limits<double>::quiet_NaN();
      }
      rep.rows.push_back(row);
    }
  }
  return rep;
}

double feller_extinction_tail_N(double alpha, double beta, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("r must be > 0");
  if (alpha == 0.0) return 1.0 / (beta * r);
  return alpha / (beta * std::expm1(alpha * r));
}

std::vector<MaxTypeRow> max_type_cb(double alpha, double beta, double x, const std::vector<double>& r_grid,
                                    std::size_t reps, double dt, std::uint64_t seed, std::size_t workers) {
  if (r_grid.empty()) throw std::invalid_argument("empty r grid");
  const auto m = BranchingMechanism::feller(alpha, beta);
  const double r_max = *std::max_element(r_grid.begin(), r_grid.end());
  std::vector<std::vector<double>> ext(kChunks);
  const Rng base = Rng(seed).split(kTagMax);
  parallel_for_chunks(kChunks, workers, [&](std::size_t c) {
    Rng rng = base.split(c);
    const std::size_t n = reps / kChunks + (c < reps % kChunks ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
      CbWalker w(m, x, dt, CbWalker::Scheme::ExactFeller, rng);
      while (!w.absorbed() && w.time() <= r_max) w.step(rng);
      ext[c].push_back(w.absorbed() ? w.absorption_time() : w.time());
    }
  });
  std::vector<MaxTypeRow> out;
  const double n = static_cast<double>(reps);
  for (double r : r_grid) {
    std::size_t cnt = 0;
    for (const auto& v : ext)
      for (double t : v) cnt += t > r;
    MaxTypeRow row;
    row.r = r;
    row.p_hat = static_cast<double>(cnt) / n;
    row.se = std::sqrt(row.p_hat * (1.0 - row.p_hat) / n);
    row.predicted = -std::expm1(-x * feller_extinction_tail_N(alpha, beta, r));
    out.push_back(row);
  }
  return out;
}

}  // namespace branchlim
