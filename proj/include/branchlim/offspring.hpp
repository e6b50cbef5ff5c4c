#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace branchlim {

enum class Criticality { Subcritical, Critical, Supercritical };

std::string to_string(Criticality c);

/// Offspring law with finite materialized support.
///
/// Named families with infinite support are truncated at a cap K. The
/// truncation keeps the mean: the tail beyond K is folded onto K with the
/// matching first moment and the excess mass taken from p_0, so a critical
/// law stays critical. truncation_mass() is the total variation distance to
/// the untruncated law.
class OffspringDist {
 public:
  /// Throws std::invalid_argument on negative entries, total mass off by more
  /// than 1e-12, the degenerate law delta_1, or zero mean.
  static OffspringDist explicit_pmf(std::vector<double> pmf);

  /// p_k = (1-a) a^k; critical at a = 1/2.
  static OffspringDist geometric(double a, std::size_t cap = 200);

  static OffspringDist poisson(double lambda, std::size_t cap = 200);

  /// p_k proportional to k^{-gamma} for 1 <= k <= cap, with p_0 fixing the
  /// mean at `mean` (requires gamma in (2,3) and mean <= 1).
  static OffspringDist heavy_tail(double gamma, double mean, std::size_t cap = 1000000);

  static OffspringDist from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  double operator[](std::size_t k) const { return k < pmf_.size() ? pmf_[k] : 0.0; }
  const std::vector<double>& pmf() const { return pmf_; }
  /// Largest k with p_k > 0.
  std::size_t max_degree() const { return pmf_.size() - 1; }
  double mean() const { return mean_; }
  double truncation_mass() const { return truncation_mass_; }
  const std::string& family() const { return family_; }
  std::string describe() const;

  /// Sum_k p_k s^k; throws std::domain_error unless 0 <= s <= 1.
  double pgf(double s) const;
  /// d/ds of the pgf.
  double pgf_derivative(double s) const;

  Criticality classify(double tol = 1e-12) const;

  /// p_hat_k = k p_k / mu.
  OffspringDist size_biased() const;

  /// Walker alias draw from one uniform u in [0,1): the integer part of
  /// u*size picks the column, the fractional part decides the alias.
  std::uint32_t draw(double u) const;

 private:
  OffspringDist() = default;
  void finalize();

  std::vector<double> pmf_;
  double mean_ = 0.0;
  double truncation_mass_ = 0.0;
  std::string family_ = "explicit";
  std::vector<double> params_;
  std::vector<double> alias_prob_;
  std::vector<std::uint32_t> alias_idx_;
};

}  // namespace branchlim
