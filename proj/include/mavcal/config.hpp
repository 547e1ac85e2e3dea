#pragma once

// Run configuration: flat `key = value` text with dotted sections (or
// `[section]` headers), validation that reports every violation, and a
// canonical serialisation used as the provenance echo.

#include "mavcal/planner.hpp"
#include "mavcal/sim_estimator.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mavcal {

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

enum class GuessPolicy { Fixed, Uniform };

struct RunConfig {
  PlannerConfig planner;  // planner.theta_plan is overwritten per run from the guess policy
  ParameterVector theta_true;
  GuessPolicy guess_policy = GuessPolicy::Uniform;
  ParameterVector theta_guess;    // used by the fixed policy
  double guess_fraction = 0.5;    // uniform policy: theta_true * (1 +- fraction)
  std::string output_dir = "out";
  int runs = 20;
  double convergence_threshold = 0.05;
  SynthesisMode synthesis = SynthesisMode::PerfectTracking;
  bool measurement_noise = true;  // false synthesises exact measurements

  /// Throws ConfigError listing every violation.
  void validate() const;
  bool operator==(const RunConfig& o) const;
};

/// Parses configuration text; unknown keys and malformed values are
/// collected and reported together.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical text with every key, in a fixed order.
std::string save_config(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::string& path);

/// Initial guess for one run: fixed, or uniform within +-fraction of truth.
ParameterVector sample_guess(const RunConfig& cfg, std::mt19937_64& rng);

/// Seed of the i-th run of a study or benchmark.
std::uint64_t run_seed(std::uint64_t base, int index);

}  // namespace mavcal
