#pragma once

// Batch experiments: optimized-vs-random estimation study and the pruning
// benchmark.

#include "mavcal/config.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mavcal {

/// Lower median (element (n-1)/2 of the sorted values). Throws on empty input.
double lower_median(std::vector<double> values);
/// Nearest-rank empirical percentile, p in [0, 100]. Throws on empty input.
double percentile(std::vector<double> values, double p);

struct TrajectoryOutcome {
  bool ok = false;
  std::string error;
  double cost = 0.0;
  double predicted_dopt = 0.0;  // planner model, d_opt(Sigma_Theta) at the end
  double final_dopt = 0.0;      // estimator, d_opt(Sigma_Theta) at the end
  bool diverged = false;
  std::array<std::optional<double>, 6> convergence;
  Vec6 final_estimate = Vec6::Zero();
  EstimationRun run;
};

struct StudyRun {
  int index = 0;
  std::uint64_t seed = 0;
  ParameterVector theta_guess;
  TrajectoryOutcome optimized;
  TrajectoryOutcome random;
};

struct StudyAggregate {
  std::size_t runs = 0;
  std::size_t failed = 0;
  std::size_t diverged = 0;
  // Median and 2.5/97.5 percentiles over runs; a run that never converged
  // counts as +inf.
  std::array<double, 6> conv_median{};
  std::array<double, 6> conv_lo{};
  std::array<double, 6> conv_hi{};
  // Convergence of the run-wise median relative-error history (nan if never).
  std::array<double, 6> conv_of_median{};
  double dopt_median = 0.0;
  double dopt_lo = 0.0;
  double dopt_hi = 0.0;
};

struct StudySummary {
  std::vector<StudyRun> runs;
  StudyAggregate optimized;
  StudyAggregate random;
  double dopt_ratio = 0.0;  // random median / optimized median

  nlohmann::json to_json() const;
  /// Table with CONV TIME per parameter and the DOPT aggregate.
  std::string table() const;
};

using Logger = std::function<void(const std::string&)>;

/// n_runs seeded runs. Per run: guess, plan, baseline, synthesise and
/// estimate both. Failures are recorded and the study continues. When
/// out_dir is given, writes summary.json, table.txt and per-run CSVs.
StudySummary run_study(const RunConfig& cfg, int n_runs, const std::optional<std::string>& out_dir = std::nullopt,
                       const Logger& log = nullptr);

StudyAggregate aggregate(const std::vector<const TrajectoryOutcome*>& outcomes, const ParameterVector& theta_true,
                         double threshold);

enum class PruningSelection { On, Off, Both };

struct BenchmarkRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool pruning = true;
  bool found = false;  // a belief beyond the root exists
  std::vector<Checkpoint> checkpoints;
  double final_incumbent = 0.0;
  std::size_t final_beliefs = 0;
};

/// Paired runs per seed with pruning toggled. When out_dir is given, writes
/// benchmark.csv (all checkpoints) and benchmark_summary.csv (median and
/// 2.5/97.5 percentiles per checkpoint and mode).
std::vector<BenchmarkRecord> run_benchmark(const RunConfig& cfg, int n_runs, PruningSelection selection,
                                           const std::optional<std::string>& out_dir = std::nullopt,
                                           const Logger& log = nullptr);

}  // namespace mavcal
