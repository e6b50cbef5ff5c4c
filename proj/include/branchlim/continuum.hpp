#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "branchlim/rng.hpp"

namespace branchlim {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Brownian mechanism Phi(l) = alpha l + beta l^2 discretized on step dt.
/// X_t = -alpha t + sqrt(2 beta) B_t and H = (X - I) / beta.
struct HeightParams {
  double alpha = 0.0;
  double beta = 1.0;
  double dt = 1e-3;
};

/// Per-excursion statistics requested from a sampler.
struct ExcursionOptions {
  std::vector<double> levels;  // local-time levels b
  double eps = 0.02;           // local-time bandwidth
  double tau_level = kInf;     // level for first passage and pre-passage statistics
  bool keep_path = false;
  bool track_width = false;  // sup over the level grid {k eps} of the local time
  /// Above this level the path is replaced by an exact first passage back
  /// down to it; statistics above the level are then unavailable.
  double fast_forward_level = kInf;
  // Early stopping once one of these is exceeded (the record is then partial).
  double stop_sup = kInf;
  double stop_zeta = kInf;
  double stop_width = kInf;
  double max_time = 1e4;
};

struct ExcursionRecord {
  double dt = 0.0;
  double beta = 1.0;
  std::vector<double> H;  // grid path from 0 back to 0 when kept
  double zeta = 0.0;
  double sigma = 0.0;  // equals zeta in the height parametrization
  double sup = 0.0;
  std::vector<double> levels;
  std::vector<double> local_times;
  double width = 0.0;
  double tau = kInf;             // first grid time with H >= tau_level
  double occupation_half = 0.0;  // time with H < tau_level / 2 before tau
  double last_passage = -1.0;    // last grid time with H >= tau_level
  bool complete = true;          // false when stopped early or capped
  bool fast_forwarded = false;
};

/// N[sup H > a] = (alpha/beta) / (e^{alpha a} - 1), or 1/(beta a) at alpha = 0.
double excursion_sup_measure(double alpha, double beta, double a);

struct ClimbStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
};

/// N[grid sup H >= a0] from climb acceptance counts.
double grid_sup_measure(const ClimbStats& stats, double alpha, double beta, double a0);
double estimate_grid_sup_measure(const HeightParams& hp, double a0, std::size_t attempts, Rng& rng);

/// One excursion from N[. | grid sup H >= a0]: a Bessel(3)-type climb to a0,
/// accepted with the weight that turns it into the excursion law, followed by
/// the drifted Brownian motion killed at 0 (bridge crossings included).
ExcursionRecord sample_excursion_above(const HeightParams& hp, double a0, const ExcursionOptions& opt, Rng& rng,
                                       ClimbStats* stats = nullptr);

struct ExcursionStreamStats {
  std::size_t excursions = 0;
  double local_time_zero = 0.0;  // -I at the horizon; N-hat = sum / this
  double time = 0.0;
};

/// Long-path decomposition of X - I into excursions on the grid. Emits one
/// record per completed excursion. Requires dt <= 1e-3 beta / max(alpha,1)^2.
ExcursionStreamStats sample_height_excursions(const HeightParams& hp, double total_time, Rng& rng,
                                              const std::function<void(ExcursionRecord&&)>& sink,
                                              const ExcursionOptions& opt = {});

/// eps^{-1} * time spent in [b, b + eps); requires a kept path and
/// eps > 10 dt sqrt(2 beta).
double local_time(const ExcursionRecord& e, double b, double eps);
/// sup over levels k*eps of local_time.
double excursion_width(const ExcursionRecord& e, double eps);
/// Maximal runs above b, shifted down by b and pinned to 0 at both ends.
std::vector<ExcursionRecord> sub_excursions_above(const ExcursionRecord& e, double b);

struct SpinalHeights {
  double dt = 0.0;
  std::vector<double> X, I, Xp, Ip;
  std::vector<double> left, right;  // left-H and right-H
  std::vector<double> spine;        // component added to H on the left side
  std::vector<double> spine_right;
  double cap = kInf;  // xi_alpha
};

/// left = (X - 2I)/beta, right from an independent copy, with I from exact
/// Brownian-bridge minima between grid points.
SpinalHeights immortal_heights(double alpha, double beta, double dt, double horizon, Rng& rng);

/// Spine component capped at xi ~ Exp(alpha), drawn from a split stream so
/// alpha = 0 reproduces immortal_heights bit for bit.
SpinalHeights condensation_heights(double alpha, double beta, double dt, double horizon, Rng& rng);

struct PassageSample {
  double tau = kInf;
  double occupation_half = 0.0;
};
/// First grid passage of the immortal left-H to b.
PassageSample immortal_first_passage(double alpha, double beta, double dt, double b, Rng& rng,
                                     double max_time = 1e4);

struct BismutOptions {
  double alpha = 0.0;
  double beta = 1.0;
  double b = 1.0;
  double b0 = 0.5;
  double eps = 0.02;
  double dt = 1e-4;
  double tau_test = 1.0;  // F = 1{tau_b <= tau_test}
  std::size_t reps = 100'000;
  std::size_t immortal_reps = 100'000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct BismutRow {
  std::string test;
  double lhs = 0.0;  // N-hat[L^b F] / N-hat[L^b0]
  double lhs_se = 0.0;
  double rhs = 0.0;  // e^{-alpha (b - b0)} E[F(left-H)]
  double rhs_se = 0.0;
  double rel_gap = 0.0;
  double rel_se = 0.0;
};

struct BismutReport {
  std::vector<BismutRow> rows;
  double a0 = 0.0;
  double normalizer = 0.0;  // estimated N[grid sup H >= a0]
  std::size_t excursions = 0;
  std::string to_csv() const;
};

BismutReport verify_bismut(const BismutOptions& opt);

enum class ContinuumFunctional { SupHeight, Mass, Width };
ContinuumFunctional parse_continuum_functional(const std::string& s);
std::string to_string(ContinuumFunctional f);

struct TheoremLOptions {
  ContinuumFunctional functional = ContinuumFunctional::SupHeight;
  double beta = 1.0;
  double b = 0.5;
  std::vector<double> r_grid{1.0, 2.0, 4.0};
  double dt = 1e-3;
  double a0 = 0.05;
  double eps = 0.02;
  std::size_t reps = 1'000'000;
  std::size_t immortal_reps = 200'000;
  double max_time = 1e4;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct TheoremLRow {
  double r = 0.0;
  std::size_t accepted = 0;
  double ks_tau = 0.0;
  double ks_se = 0.0;  // null standard deviation of the two-sample statistic
  double ks_occupation = 0.0;
  double mean_tau = 0.0;
};

struct TheoremLReport {
  std::string functional;
  std::vector<TheoremLRow> rows;
  std::size_t excursions = 0;
  std::size_t capped = 0;
  double immortal_mean_tau = 0.0;
  std::string to_csv() const;
  /// Each distance is at most the previous one plus slack * its null sd.
  bool decreasing(double slack = 4.0) const;
};

TheoremLReport verify_theorem_L(const TheoremLOptions& opt);

/// Two-sample Kolmogorov-Smirnov statistic; infinities compare as largest.
double ks_statistic(std::vector<double> a, std::vector<double> b);

struct ContinuumMaxRow {
  double r = 0.0;
  double p_hat = 0.0;  // P^(x)[sup H > r] from Poisson superpositions
  double se = 0.0;
  double predicted = 0.0;  // 1 - exp(-x N-hat[sup H > r])
  double predicted_se = 0.0;
};

std::vector<ContinuumMaxRow> max_type_continuum(const HeightParams& hp, double x, const std::vector<double>& r_grid,
                                                std::size_t reps, double a0, std::uint64_t seed,
                                                std::size_t workers);

struct HeightRatioRow {
  double b = 0.0;
  std::size_t count_b = 0;
  std::size_t count_2b = 0;
  double ratio = 0.0;  // N-hat[sup H > 2b] / N-hat[sup H > b]
  double se = 0.0;
};

/// Tail-scaling ratios from the long-path stream.
std::vector<HeightRatioRow> height_ratio_report(const HeightParams& hp, const std::vector<double>& b_list,
                                                double total_time, std::uint64_t seed, std::size_t workers);

struct DeltaBandRow {
  std::string quantity;
  double alpha = 0.0;
  double dt = 0.0;
  double value_dt = 0.0;
  double value_fine = 0.0;  // at dt / 4
  double band = 0.0;        // |value_dt - value_fine|
  double se = 0.0;          // combined MC standard error
};

/// Refinement study dt vs dt/4 for the local-time ratio and the tau_b mean.
std::vector<DeltaBandRow> delta_band_study(double beta, double dt, std::size_t reps, std::uint64_t seed,
                                           std::size_t workers);
std::string delta_band_csv(const std::vector<DeltaBandRow>& rows);

}  // namespace branchlim
