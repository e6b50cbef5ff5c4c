#include "branchlim/offspring.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace branchlim {

using nlohmann::json;

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::Subcritical: return "subcritical";
    case Criticality::Critical: return "critical";
    case Criticality::Supercritical: return "supercritical";
  }
  return "?";
}

namespace {

void check_pmf(const std::vector<double>& pmf) {
  if (pmf.empty()) throw std::invalid_argument("empty pmf");
  double total = 0.0;
  for (double x : pmf) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("pmf entries must be finite and >= 0");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "pmf sums to " << total << ", not 1";
    throw std::invalid_argument(os.str());
  }
}

// Folds a tail with mass `tail` and first moment `tail_moment` onto the cap,
// keeping the mean. Returns the total variation distance moved.
double fold_tail(std::vector<double>& pmf, double tail, double tail_moment) {
  const auto cap = static_cast<double>(pmf.size() - 1);
  const double at_cap = tail_moment / cap;
  pmf.back() += at_cap;
  pmf[0] -= at_cap - tail;
  if (pmf[0] < 0.0) throw std::invalid_argument("cap too small for mean-preserving truncation");
  return at_cap;
}

}  // namespace

void OffspringDist::finalize() {
  while (pmf_.size() > 1 && pmf_.back() == 0.0) pmf_.pop_back();
  mean_ = 0.0;
  for (std::size_t k = 1; k < pmf_.size(); ++k) mean_ += static_cast<double>(k) * pmf_[k];

  // Vose alias table.
  const std::size_t n = pmf_.size();
  alias_prob_.assign(n, 0.0);
  alias_idx_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  const double total = std::accumulate(pmf_.begin(), pmf_.end(), 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    scaled[k] = pmf_[k] * static_cast<double>(n) / total;
    (scaled[k] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(k));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    alias_prob_[s] = scaled[s];
    alias_idx_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto k : large) alias_prob_[k] = 1.0, alias_idx_[k] = k;
  for (auto k : small) alias_prob_[k] = 1.0, alias_idx_[k] = k;
}

OffspringDist OffspringDist::explicit_pmf(std::vector<double> pmf) {
  check_pmf(pmf);
  OffspringDist d;
  d.pmf_ = std::move(pmf);
  d.finalize();
  if (d.pmf_.size() == 2 && d.pmf_[0] == 0.0) throw std::invalid_argument("p = delta_1 is excluded");
  if (!(d.mean_ > 0.0)) throw std::invalid_argument("offspring mean must be positive");
  return d;
}

OffspringDist OffspringDist::geometric(double a, std::size_t cap) {
  if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("geometric parameter must lie in (0,1)");
  if (cap < 2) throw std::invalid_argument("cap must be >= 2");
  OffspringDist d;
  d.pmf_.resize(cap + 1);
  for (std::size_t k = 0; k <= cap; ++k) d.pmf_[k] = (1.0 - a) * std::pow(a, static_cast<double>(k));
  // Sum_{k>=m} k (1-a) a^k = a^m (m + a/(1-a)).
  const double m = static_cast<double>(cap + 1);
  const double tail = std::pow(a, m);
  const double moment = tail * (m + a / (1.0 - a));
  d.truncation_mass_ = fold_tail(d.pmf_, tail, moment);
  d.family_ = "geometric";
  d.params_ = {a, static_cast<double>(cap)};
  d.finalize();
  return d;
}

OffspringDist OffspringDist::poisson(double lambda, std::size_t cap) {
  if (!(lambda > 0.0)) throw std::invalid_argument("poisson mean must be positive");
  if (static_cast<double>(cap) < lambda + 2.0) throw std::invalid_argument("cap must exceed the mean");
  OffspringDist d;
  d.pmf_.resize(cap + 1);
  for (std::size_t k = 0; k <= cap; ++k) {
    const double kk = static_cast<double>(k);
    d.pmf_[k] = std::exp(kk * std::log(lambda) - lambda - std::lgamma(kk + 1.0));
  }
  double tail = 0.0, moment = 0.0;
  for (std::size_t k = cap + 1;; ++k) {
    const double kk = static_cast<double>(k);
    const double pk = std::exp(kk * std::log(lambda) - lambda - std::lgamma(kk + 1.0));
    tail += pk;
    moment += kk * pk;
    if (pk < 1e-300 || pk < 1e-20 * tail) break;
  }
  d.truncation_mass_ = fold_tail(d.pmf_, tail, moment);
  d.family_ = "poisson";
  d.params_ = {lambda, static_cast<double>(cap)};
  d.finalize();
  return d;
}

OffspringDist OffspringDist::heavy_tail(double gamma, double mean, std::size_t cap) {
  if (!(gamma > 2.0 && gamma < 3.0)) throw std::invalid_argument("heavy-tail exponent must lie in (2,3)");
  if (!(mean > 0.0 && mean <= 1.0)) throw std::invalid_argument("heavy-tail mean must lie in (0,1]");
  if (cap < 2) throw std::invalid_argument("cap must be >= 2");
  // Summed from the small terms up for accuracy.
  double s0 = 0.0, s1 = 0.0;
  for (std::size_t k = cap; k >= 1; --k) {
    const double kk = static_cast<double>(k);
    s0 += std::pow(kk, -gamma);
    s1 += std::pow(kk, 1.0 - gamma);
  }
  const double c = mean / s1;
  OffspringDist d;
  d.pmf_.resize(cap + 1);
  d.pmf_[0] = 1.0 - c * s0;
  if (d.pmf_[0] < 0.0) throw std::invalid_argument("heavy-tail mean too large for this exponent");
  for (std::size_t k = 1; k <= cap; ++k) d.pmf_[k] = c * std::pow(static_cast<double>(k), -gamma);
  d.family_ = "heavytail";
  d.params_ = {gamma, mean, static_cast<double>(cap)};
  d.finalize();
  return d;
}

OffspringDist OffspringDist::from_json(const json& j) {
  if (!j.is_object() || !j.contains("family")) throw std::invalid_argument("offspring JSON needs a \"family\" field");
  const auto fam = j.at("family").get<std::string>();
  auto only = [&](std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool ok = it.key() == "family";
      for (auto k : keys) ok = ok || it.key() == k;
      if (!ok) throw std::invalid_argument("unknown offspring field '" + it.key() + "'");
    }
  };
  if (fam == "explicit") {
    only({"pmf"});
    return explicit_pmf(j.at("pmf").get<std::vector<double>>());
  }
  if (fam == "geometric") {
    only({"a", "cap"});
    return geometric(j.at("a").get<double>(), j.value("cap", std::size_t{200}));
  }
  if (fam == "poisson") {
    only({"lambda", "cap"});
    return poisson(j.at("lambda").get<double>(), j.value("cap", std::size_t{200}));
  }
  if (fam == "heavytail") {
    only({"gamma", "mean", "cap"});
    return heavy_tail(j.at("gamma").get<double>(), j.at("mean").get<double>(),
                      j.value("cap", std::size_t{1000000}));
  }
  throw std::invalid_argument("unknown offspring family '" + fam + "'");
}

json OffspringDist::to_json() const {
  if (family_ == "geometric") return {{"family", family_}, {"a", params_[0]}, {"cap", std::size_t(params_[1])}};
  if (family_ == "poisson") return {{"family", family_}, {"lambda", params_[0]}, {"cap", std::size_t(params_[1])}};
  if (family_ == "heavytail") {
    return {{"family", family_}, {"gamma", params_[0]}, {"mean", params_[1]}, {"cap", std::size_t(params_[2])}};
  }
  return {{"family", "explicit"}, {"pmf", pmf_}};
}

std::string OffspringDist::describe() const { return to_json().dump(); }

double OffspringDist::pgf(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("pgf argument must lie in [0,1]");
  double acc = 0.0;
  for (std::size_t k = pmf_.size(); k-- > 0;) acc = acc * s + pmf_[k];
  return acc;
}

double OffspringDist::pgf_derivative(double s) const {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("pgf argument must lie in [0,1]");
  double acc = 0.0;
  for (std::size_t k = pmf_.size(); k-- > 1;) acc = acc * s + static_cast<double>(k) * pmf_[k];
  return acc;
}

Criticality OffspringDist::classify(double tol) const {
  if (std::abs(mean_ - 1.0) <= tol) return Criticality::Critical;
  return mean_ < 1.0 ? Criticality::Subcritical : Criticality::Supercritical;
}

OffspringDist OffspringDist::size_biased() const {
  OffspringDist d;
  d.pmf_.assign(pmf_.size(), 0.0);
  for (std::size_t k = 1; k < pmf_.size(); ++k) d.pmf_[k] = static_cast<double>(k) * pmf_[k] / mean_;
  d.family_ = "explicit";
  d.finalize();
  return d;
}

std::uint32_t OffspringDist::draw(double u) const {
  const double x = u * static_cast<double>(alias_prob_.size());
  auto i = static_cast<std::size_t>(x);
  if (i >= alias_prob_.size()) i = alias_prob_.size() - 1;
  return x - static_cast<double>(i) < alias_prob_[i] ? static_cast<std::uint32_t>(i) : alias_idx_[i];
}

}  // namespace branchlim
