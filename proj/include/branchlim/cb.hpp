#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "branchlim/rng.hpp"
#include "json.hpp"

namespace branchlim {

/// Jump-size law of a compound-Poisson Levy measure.
struct JumpLaw {
  enum class Kind { Exp, Pareto };
  Kind kind = Kind::Exp;
  double mean = 1.0;   // Exp
  double gamma = 2.0;  // Pareto tail index, > 1
  double min = 1.0;    // Pareto scale

  double sample(Rng& rng) const;
  double first_moment() const;
  /// int (e^{-l t} - 1 + l t) nu(dt) for the probability law nu.
  double compensated_laplace(double l) const;
  /// int t (1 - e^{-l t}) nu(dt).
  double compensated_laplace_derivative(double l) const;
};

/// Phi(l) = alpha l + beta l^2 + rate * int (e^{-l t} - 1 + l t) nu(dt).
struct BranchingMechanism {
  double alpha = 0.0;
  double beta = 0.0;
  double jump_rate = 0.0;
  std::optional<JumpLaw> jumps;

  static BranchingMechanism feller(double alpha, double beta);
  /// {"alpha","beta","pi":{"kind":"zero"}|{"kind":"cpp","rate","jumps":{...}}}; unknown fields rejected.
  static BranchingMechanism from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  bool has_jumps() const { return jumps.has_value() && jump_rate > 0.0; }
  bool critical() const { return alpha == 0.0; }
  /// beta > 0 or int_0^1 t pi(dt) = infinity; compound-Poisson laws only meet it through beta.
  bool weak_condition() const { return beta > 0.0; }

  double phi(double l) const;
  double phi_prime(double l) const;
  /// (Phi(p) - Phi(q)) / (p - q) - alpha, with the derivative at p = q.
  double phi_pq(double p, double q) const;
};

/// v_t(l): solution of v' = -Phi(v), v_0 = l.
double cb_v(const BranchingMechanism& m, double l, double t);
/// d v_t(l) / d l.
double cb_v_dlambda(const BranchingMechanism& m, double l, double t);

struct TimeGrid {
  double dt = 0.01;
  std::size_t steps = 100;
};

struct JumpEvent {
  double time = 0.0;
  double size = 0.0;
  double post = 0.0;  // value right after the jump
};

struct SamplePath {
  double dt = 0.0;
  std::vector<double> values;  // values[i] at time i*dt; truncated at a kill
  std::vector<JumpEvent> jumps;
  bool absorbed = false;
  double absorption_time = 0.0;
  /// CBI only: killed at rate alpha (immigration mechanism with constant term).
  bool killed = false;
  double kill_time = 0.0;
};

/// Exact transitions of the Feller diffusion Phi = alpha l + beta l^2, with
/// the absorption time sampled exactly inside the absorbing step.
SamplePath sample_feller_cb(double alpha, double beta, double x, const TimeGrid& grid, Rng& rng);

/// Euler scheme with branching jumps at rate Y * jump_rate, applied at the
/// left endpoint. Refuses dt * (alpha + jump_rate * E[jump]) >= 0.1.
SamplePath sample_jumpdiff_cb(const BranchingMechanism& m, double x, const TimeGrid& grid, Rng& rng);

/// CBI with immigration Phi', exact for jump-free mechanisms.
SamplePath sample_cbi(const BranchingMechanism& m, double x, const TimeGrid& grid, Rng& rng);

struct CbFunctionals {
  double W = 0.0;
  double sigma = 0.0;
  double M = 0.0;
  double extinction_time = 0.0;
  /// Not absorbed within the grid: every value is a lower bound.
  bool truncated = false;
};

CbFunctionals cb_functionals(const SamplePath& path);

enum class CbFunctional { W, Sigma, M };
CbFunctional parse_cb_functional(const std::string& s);
std::string to_string(CbFunctional f);

struct LccbOptions {
  double b = 1.0;
  std::vector<double> r_grid{20.0};
  CbFunctional functional = CbFunctional::Sigma;
  std::vector<double> lambdas{1.0};
  std::size_t reps = 100'000;  // accepted paths at the largest r
  double dt = 0.02;
  double max_time = 1.0e4;
  std::size_t max_attempts = 500'000'000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct LccbRow {
  double r = 0.0;
  double lambda = 0.0;
  std::size_t accepted = 0;
  std::size_t attempts = 0;
  double lhs = 0.0;  // E_x[F | A > r]
  double se = 0.0;
  double rhs = 0.0;  // (1/x) E_x[Y_b F]
  double gap = 0.0;
};

struct LccbReport {
  std::vector<LccbRow> rows;
  std::size_t unresolved = 0;  // paths still undecided at max_time
  bool exhausted = false;
  std::string to_csv() const;
};

LccbReport verify_lccb(const BranchingMechanism& m, double x, const LccbOptions& opt);

/// W(r) with Laplace transform 1/Phi; jump-free mechanisms only.
double scale_function(const BranchingMechanism& m, double r);
/// W(r) - W(r - x), evaluated without cancellation.
double scale_increment(const BranchingMechanism& m, double r, double x);

struct ScaleRow {
  double r = 0.0;
  double x = 0.0;
  double ratio = 0.0;  // (W(r) - W(r-x)) / (W(r) - W(r-1))
  double limit = 0.0;  // x
};
std::vector<ScaleRow> scale_ratio_report(const BranchingMechanism& m, const std::vector<double>& x_grid,
                                         const std::vector<double>& r_grid);

/// N[sigma > r] = (pi beta r)^{-1/2} for the critical Feller mechanism.
double sigma_tail_N(double beta, double r);
/// P_x[sigma > r] = erf(x / (2 sqrt(beta r))).
double sigma_tail_exact(double beta, double x, double r);
/// int (1 - e^{-l r}) N[sigma in dr] by quadrature; equals sqrt(l / beta).
double sigma_laplace_quadrature(double beta, double l);

struct SigmaRow {
  double x = 0.0;
  double r = 0.0;
  double r_shift = 0.0;
  std::size_t paths = 0;
  double p_hat = 0.0;  // P_x[sigma > r]
  double p_se = 0.0;
  double n_ratio = 0.0;  // p_hat / N[sigma > r], limit x
  double n_ratio_se = 0.0;
  double n_ratio_exact = 0.0;
  double shift_ratio = 0.0;  // P_x[sigma > r - r'] / P_x[sigma > r], limit 1
  double shift_se = 0.0;
  double shift_exact = 0.0;
};

struct SigmaReport {
  std::vector<SigmaRow> rows;
  std::vector<double> laplace_lambdas;
  std::vector<double> laplace_abs_error;
  std::string to_csv() const;
};

SigmaReport sigma_tail_checks(double beta, const std::vector<double>& r_grid, const std::vector<double>& x_grid,
                              double r_shift, std::size_t reps, double dt, std::uint64_t seed,
                              std::size_t workers);

struct MaxTypeRow {
  double r = 0.0;
  double p_hat = 0.0;  // P_x[A > r]
  double se = 0.0;
  double predicted = 0.0;  // 1 - exp(-x N[A > r])
};

/// A = extinction time of the Feller CB from x, N[A > r] = v_r(infinity).
std::vector<MaxTypeRow> max_type_cb(double alpha, double beta, double x, const std::vector<double>& r_grid,
                                    std::size_t reps, double dt, std::uint64_t seed, std::size_t workers);

/// v_r(infinity) for the Feller mechanism, the N-measure of extinction after r.
double feller_extinction_tail_N(double alpha, double beta, double r);

}  // namespace branchlim
