#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace branchlim::runner {

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kBudget = 3 };

/// Config or flag problem; nothing is written.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Invocation {
  std::string command;
  std::optional<std::string> config_path;
  /// Inline config, used when no path is given.
  std::optional<nlohmann::json> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
};

const std::vector<std::string>& commands();

/// Validates, runs and writes artifacts to the output directory through a
/// staging subdirectory. Returns the exit status; progress goes to `log`.
int run(const Invocation& inv, std::ostream& log);

/// Parses and validates only; throws ValidationError.
nlohmann::json validated_config(const Invocation& inv);

std::string version();

}  // namespace branchlim::runner
