#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "branchlim/exact_law.hpp"
#include "branchlim/offspring.hpp"
#include "branchlim/samplers.hpp"

namespace branchlim {

enum class LabMode { Exact, MonteCarlo };

struct LabOptions {
  LabMode mode = LabMode::Exact;
  std::size_t reps = 10'000;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  RejectionBudget budget{};
  EnumerationOptions enumeration{};
};

struct TvRow {
  std::size_t n = 0;
  double tv = 0.0;
  double se = 0.0;  // batch-means standard error, 0 in exact mode
  bool exact = true;
  double event_probability = 0.0;
  std::size_t attempts = 0;  // MC rejection attempts
  /// Probe reports only: TV to the spine-truncated reference.
  double tv_alt = -1.0;
  double se_alt = 0.0;
  std::string note;  // "skipped: ..." rows carry no TV
  bool skipped() const { return !note.empty() && note.rfind("skipped", 0) == 0; }
};

struct RatioRow {
  std::size_t n = 0;
  std::size_t k = 1;
  double tail_ratio = 0.0;  // v_n(k) / (k v_n)
  double tail_se = 0.0;
  double point_ratio = 0.0;  // v_(n)(k) / (k v_(n))
  double point_se = 0.0;
  std::vector<double> shift_ratio;  // v_{n-r}(k) / v_n(k), one per r
  std::vector<double> shift_se;
  /// Max-type only: |closed form - max-convolution| for the forest point mass.
  double gwmax_gap = -1.0;
  bool exact = true;
  std::string note;
};

struct ConvergenceReport {
  std::string offspring;
  std::string functional;
  std::string conditioning;  // "tail", "point", "ratio", "probe"
  std::size_t b = 0;
  std::vector<std::size_t> grid;
  std::vector<std::size_t> r_list;
  std::vector<TvRow> tv_rows;
  std::vector<RatioRow> ratio_rows;
  bool degenerate_lattice = false;
  bool exploratory = false;
  double reference_total = 0.0;  // mass of the immortal reference law
  double reference_deficiency = 0.0;

  std::string to_csv() const;
  nlohmann::json metadata() const;
  /// Rows with a TV value, in grid order.
  std::vector<const TvRow*> evaluated() const;
};

ConvergenceReport run_tail_convergence(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                       const std::vector<std::size_t>& n_grid, const LabOptions& opt = {});

ConvergenceReport run_point_convergence(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                        const std::vector<std::size_t>& n_grid, const LabOptions& opt = {});

ConvergenceReport run_ratio_limits(const OffspringDist& p, const FunctionalTag& f,
                                   const std::vector<std::size_t>& k_list, const std::vector<std::size_t>& r_list,
                                   const std::vector<std::size_t>& n_grid, const LabOptions& opt = {});

/// Exploratory: conditioned prefix laws under a subcritical heavy-tail law
/// against the immortal law and a spine-truncated variant whose spine stops
/// after a geometric number G of generations (P[G >= l] = mu^l) at a node
/// with offspring drawn from p given k > threshold(n).
ConvergenceReport probe_conjectures(const OffspringDist& p, const FunctionalTag& f, std::size_t b,
                                    const std::vector<std::size_t>& n_grid, const LabOptions& opt = {});

/// Exact probability of r_b under the spine-truncated reference.
double truncated_spine_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b, std::size_t threshold);
/// Same, with sum_{k > threshold} p_k supplied by the caller.
double truncated_spine_prob(const OffspringDist& p, const PlaneTree& t, std::size_t b, std::size_t threshold,
                            double tail_above);

/// sum_{k > m} p_k.
double offspring_tail_above(const OffspringDist& p, std::size_t m);

/// Degree threshold of the terminal spine node for the probe reference.
std::size_t probe_threshold(const OffspringDist& p, const FunctionalTag& f, std::size_t n);

/// min(A(tau^(k)), cap + 1), growing the forest only until that is known.
/// nullopt on node_cap overflow.
std::optional<std::size_t> sample_functional_capped(const OffspringDist& p, const FunctionalTag& f, std::size_t k,
                                                    std::size_t cap, Rng& rng, std::size_t node_cap);

/// Powers of two in [lo, hi].
std::vector<std::size_t> powers_of_two(std::size_t lo, std::size_t hi);

}  // namespace branchlim
