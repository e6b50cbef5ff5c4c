#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace branchlim::acceptance {

struct Options {
  std::uint64_t seed = 20240611;
  std::size_t workers = 1;
  /// Multiplies every Monte Carlo sample size; 1 is the pinned full scale.
  double scale = 1.0;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Result {
  int id = 0;
  std::string title;
  bool pass = false;
  double seconds = 0.0;
  double budget_seconds = 0.0;
  std::vector<Check> checks;
  /// Named CSV tables produced while checking.
  std::vector<std::pair<std::string, std::string>> tables;

  /// "PASS [n] title (s / budget s)" followed by failing checks.
  std::string summary_line() const;
  nlohmann::json to_json() const;
};

inline constexpr int kCriteria = 10;

/// Runs criterion id in 1..10. Runtime counts toward pass.
Result run(int id, const Options& opt);
std::vector<Result> run_all(const std::vector<int>& ids, const Options& opt);

}  // namespace branchlim::acceptance
