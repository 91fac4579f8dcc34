#ifndef FBP_CONFIG_HPP
#define FBP_CONFIG_HPP

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fbp/problem.hpp"

namespace fbp {

struct OutputConfig {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
};

/// A fully validated run description. Structural violations (growth
/// exponents, coupling positivity, uncovered nonlinearity regimes) are hard
/// errors unless `allow_uncovered` downgrades them to stamped warnings.
struct RunConfig {
  nlohmann::json raw;
  ProblemSetup setup;
  EnsembleConfig ensemble;
  OutputConfig output;
  bool allow_uncovered = false;
  std::vector<std::string> warnings;
  std::optional<Forcing> exact_solution;
};

RunConfig parse_config(const nlohmann::json& j, bool allow_uncovered_flag);
RunConfig load_config(const std::string& path, bool allow_uncovered_flag);

}  // namespace fbp

#endif
