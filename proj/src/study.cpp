#include "mavcal/study.hpp"

#include "mavcal/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace mavcal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

nlohmann::json conv_json(const std::array<std::optional<double>, 6>& c) {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < 6; ++i) j[kParameterNames[i]] = c[i] ? nlohmann::json(*c[i]) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json aggregate_json(const StudyAggregate& a) {
  nlohmann::json j;
  j["runs"] = a.runs;
  j["failed"] = a.failed;
  j["diverged"] = a.diverged;
  for (int i = 0; i < 6; ++i) {
    j["conv_time"][kParameterNames[i]] = {{"median", number_or_null(a.conv_median[i])},
                                          {"p2_5", number_or_null(a.conv_lo[i])},
                                          {"p97_5", number_or_null(a.conv_hi[i])},
                                          {"of_median_history", number_or_null(a.conv_of_median[i])}};
  }
  j["dopt"] = {{"median", number_or_null(a.dopt_median)},
               {"p2_5", number_or_null(a.dopt_lo)},
               {"p97_5", number_or_null(a.dopt_hi)}};
  return j;
}

std::string cell(double v, const char* f = "%.2f") {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

TrajectoryOutcome evaluate_outcome(const Trajectory& traj, const RunConfig& cfg, const PlannerConfig& pcfg,
                                   std::mt19937_64& rng) {
  TrajectoryOutcome o;
  o.cost = traj.cost;
  try {
    const Covariance predicted = evaluate_trajectory(traj, pcfg);
    o.predicted_dopt = d_optimality(parameter_block(predicted));
    NoiseConfig synth = pcfg.noise;
    if (!cfg.measurement_noise) {
      synth.position_var.setZero();
      synth.attitude_var.setZero();
    }
    const MeasurementStream stream = synthesize(traj, pcfg.geometry, cfg.theta_true, synth, rng, cfg.synthesis);
    o.run = estimate(stream, pcfg.geometry, pcfg.theta_plan, pcfg.prior(), pcfg.noise);
    o.diverged = o.run.diverged;
    o.final_dopt = o.run.dopt.back();
    o.final_estimate = o.run.theta.back();
    o.convergence = convergence_time(o.run, cfg.theta_true, cfg.convergence_threshold);
    o.ok = true;
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  return o;
}

}  // namespace

double lower_median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p / 100.0 * n)));
  return values[std::min(rank, values.size()) - 1];
}

StudyAggregate aggregate(const std::vector<const TrajectoryOutcome*>& outcomes, const ParameterVector& theta_true,
                         double threshold) {
  StudyAggregate a;
  a.runs = outcomes.size();
  std::vector<const TrajectoryOutcome*> ok;
  for (const auto* o : outcomes) {
    if (!o->ok) {
      ++a.failed;
      continue;
    }
    if (o->diverged) ++a.diverged;
    ok.push_back(o);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  a.conv_median.fill(nan);
  a.conv_lo.fill(nan);
  a.conv_hi.fill(nan);
  a.conv_of_median.fill(nan);
  a.dopt_median = a.dopt_lo = a.dopt_hi = nan;
  if (ok.empty()) return a;

  const Vec6 truth = theta_true.as_vector();
  for (int i = 0; i < 6; ++i) {
    std::vector<double> c;
    for (const auto* o : ok) c.push_back(o->convergence[i] ? *o->convergence[i] : kInf);
    a.conv_median[i] = lower_median(c);
    a.conv_lo[i] = percentile(c, 2.5);
    a.conv_hi[i] = percentile(c, 97.5);
  }
  std::vector<double> d;
  for (const auto* o : ok) d.push_back(o->final_dopt);
  a.dopt_median = lower_median(d);
  a.dopt_lo = percentile(d, 2.5);
  a.dopt_hi = percentile(d, 97.5);

  // Median relative-error history; shorter runs hold their final value.
  std::size_t len = 0;
  const TrajectoryOutcome* longest = ok.front();
  for (const auto* o : ok) {
    if (o->run.size() > len) {
      len = o->run.size();
      longest = o;
    }
  }
  for (int i = 0; i < 6; ++i) {
    std::vector<double> med(len);
    std::vector<double> at(ok.size());
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t r = 0; r < ok.size(); ++r) {
        const auto& h = ok[r]->run.theta;
        const double est = h[std::min(k, h.size() - 1)][i];
        at[r] = std::abs(est - truth[i]) / std::abs(truth[i]);
      }
      med[k] = lower_median(at);
    }
    std::size_t k = len;
    while (k > 0 && med[k - 1] < threshold) --k;
    a.conv_of_median[i] = k == len ? nan : longest->run.t[k];
  }
  return a;
}

nlohmann::json StudySummary::to_json() const {
  nlohmann::json j;
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json jr;
    jr["index"] = r.index;
    jr["seed"] = r.seed;
    const Vec6 guess = r.theta_guess.as_vector();
    jr["theta_guess"] = std::vector<double>(guess.data(), guess.data() + 6);
    for (const auto& [name, o] : {std::pair<const char*, const TrajectoryOutcome*>{"optimized", &r.optimized},
                                  std::pair<const char*, const TrajectoryOutcome*>{"random", &r.random}}) {
      nlohmann::json jo;
      jo["ok"] = o->ok;
      jo["error"] = o->error;
      jo["cost"] = o->cost;
      jo["predicted_dopt"] = number_or_null(o->predicted_dopt);
      jo["final_dopt"] = number_or_null(o->final_dopt);
      jo["diverged"] = o->diverged;
      jo["conv_time"] = conv_json(o->convergence);
      jr[name] = jo;
    }
    j["runs"].push_back(jr);
  }
  j["aggregate"]["optimized"] = aggregate_json(optimized);
  j["aggregate"]["random"] = aggregate_json(random);
  j["aggregate"]["dopt_ratio"] = number_or_null(dopt_ratio);
  return j;
}

std::string StudySummary::table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %s\n", "", "CONV TIME [s] (median)");
  os << line;
  std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s %8s %8s %12s\n", "", "cT", "cD", "cM", "jx", "jy", "jz",
                "DOPT");
  os << line;
  for (const auto& [name, a] : {std::pair<const char*, const StudyAggregate*>{"optimized", &optimized},
                                std::pair<const char*, const StudyAggregate*>{"random", &random}}) {
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s %8s %8s %12s\n", name, cell(a->conv_median[0]).c_str(),
                  cell(a->conv_median[1]).c_str(), cell(a->conv_median[2]).c_str(), cell(a->conv_median[3]).c_str(),
                  cell(a->conv_median[4]).c_str(), cell(a->conv_median[5]).c_str(),
                  cell(a->dopt_median, "%.3e").c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "DOPT ratio (random / optimized): %s\n", cell(dopt_ratio).c_str());
  os << line;
  std::snprintf(line, sizeof line, "runs: %zu, failed: %zu / %zu, diverged: %zu / %zu\n", optimized.runs,
                optimized.failed, random.failed, optimized.diverged, random.diverged);
  os << line;
  return os.str();
}

StudySummary run_study(const RunConfig& cfg, int n_runs, const std::optional<std::string>& out_dir,
                       const Logger& log) {
  cfg.validate();
  if (n_runs < 1) throw std::invalid_argument("study needs at least one run");
  StudySummary s;
  for (int i = 0; i < n_runs; ++i) {
    StudyRun r;
    r.index = i;
    r.seed = run_seed(cfg.planner.seed, i);
    std::mt19937_64 rng(r.seed);
    r.theta_guess = sample_guess(cfg, rng);
    PlannerConfig pcfg = cfg.planner;
    pcfg.theta_plan = r.theta_guess;
    pcfg.seed = r.seed;

    try {
      const PlanResult p = plan(pcfg);
      r.optimized = evaluate_outcome(p.trajectory, cfg, pcfg, rng);
      if (out_dir) {
        std::ostringstream ts;
        write_trajectory_csv(ts, p.trajectory, pcfg.noise.rate);
        write_file(*out_dir + "/run_" + std::to_string(i) + "/optimized_trajectory.csv", ts.str());
        write_file(*out_dir + "/run_" + std::to_string(i) + "/optimized_trajectory.json",
                   trajectory_to_json(p.trajectory).dump(1) + "\n");
      }
    } catch (const std::exception& e) {
      r.optimized.error = e.what();
    }
    try {
      const Trajectory b = random_baseline_plan(pcfg);
      r.random = evaluate_outcome(b, cfg, pcfg, rng);
      if (out_dir) {
        std::ostringstream ts;
        write_trajectory_csv(ts, b, pcfg.noise.rate);
        write_file(*out_dir + "/run_" + std::to_string(i) + "/random_trajectory.csv", ts.str());
        write_file(*out_dir + "/run_" + std::to_string(i) + "/random_trajectory.json",
                   trajectory_to_json(b).dump(1) + "\n");
      }
    } catch (const std::exception& e) {
      r.random.error = e.what();
    }
    if (out_dir) {
      for (const auto& [name, o] : {std::pair<const char*, const TrajectoryOutcome*>{"optimized", &r.optimized},
                                    std::pair<const char*, const TrajectoryOutcome*>{"random", &r.random}}) {
        if (!o->ok) continue;
        std::ostringstream es;
        write_estimation_csv(es, o->run);
        write_file(*out_dir + "/run_" + std::to_string(i) + "/" + name + "_estimation.csv", es.str());
      }
    }
    if (log) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "run %d: optimized dopt %s, random dopt %s", i,
                    r.optimized.ok ? cell(r.optimized.final_dopt, "%.3e").c_str() : "failed",
                    r.random.ok ? cell(r.random.final_dopt, "%.3e").c_str() : "failed");
      log(buf);
    }
    s.runs.push_back(std::move(r));
  }

  std::vector<const TrajectoryOutcome*> opt, rnd;
  for (const auto& r : s.runs) {
    opt.push_back(&r.optimized);
    rnd.push_back(&r.random);
  }
  s.optimized = aggregate(opt, cfg.theta_true, cfg.convergence_threshold);
  s.random = aggregate(rnd, cfg.theta_true, cfg.convergence_threshold);
  s.dopt_ratio = s.random.dopt_median / s.optimized.dopt_median;

  if (out_dir) {
    write_file(*out_dir + "/summary.json", s.to_json().dump(1) + "\n");
    write_file(*out_dir + "/table.txt", s.table());
  }
  return s;
}

std::vector<BenchmarkRecord> run_benchmark(const RunConfig& cfg, int n_runs, PruningSelection selection,
                                           const std::optional<std::string>& out_dir, const Logger& log) {
  cfg.validate();
  if (n_runs < 1) throw std::invalid_argument("benchmark needs at least one run");
  std::vector<bool> modes;
  if (selection != PruningSelection::Off) modes.push_back(true);
  if (selection != PruningSelection::On) modes.push_back(false);

  std::vector<BenchmarkRecord> out;
  for (int i = 0; i < n_runs; ++i) {
    const std::uint64_t seed = run_seed(cfg.planner.seed, i);
    std::mt19937_64 rng(seed);
    const ParameterVector guess = sample_guess(cfg, rng);
    for (bool pruning : modes) {
      PlannerConfig pcfg = cfg.planner;
      pcfg.theta_plan = guess;
      pcfg.seed = seed;
      pcfg.pruning = pruning;
      const PlanOutcome o = plan_search(pcfg, initial_hover(pcfg));
      BenchmarkRecord r;
      r.index = i;
      r.seed = seed;
      r.pruning = pruning;
      r.found = o.trajectory.has_value();
      r.checkpoints = o.stats.checkpoints;
      r.final_beliefs = r.checkpoints.empty() ? o.stats.beliefs : r.checkpoints.back().beliefs;
      r.final_incumbent = r.checkpoints.empty() ? kInf : r.checkpoints.back().incumbent;
      if (log) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "run %d pruning %s: beliefs %zu, incumbent %.3e", i, pruning ? "on" : "off",
                      r.final_beliefs, r.final_incumbent);
        log(buf);
      }
      out.push_back(std::move(r));
    }
  }

  if (out_dir) {
    std::ostringstream all;
    all << "run,seed,pruning,checkpoint,runtime,iteration,beliefs,alive_beliefs,vertices,incumbent\n";
    for (const auto& r : out) {
      for (std::size_t c = 0; c < r.checkpoints.size(); ++c) {
        const Checkpoint& k = r.checkpoints[c];
        all << r.index << ',' << r.seed << ',' << (r.pruning ? "on" : "off") << ',' << c << ','
            << format_double(k.runtime) << ',' << k.iteration << ',' << k.beliefs << ',' << k.alive_beliefs << ','
            << k.vertices << ',' << format_double(k.incumbent) << '\n';
      }
    }
    write_file(*out_dir + "/benchmark.csv", all.str());

    std::ostringstream sum;
    sum << "pruning,checkpoint,runtime,beliefs_median,beliefs_p2_5,beliefs_p97_5,incumbent_median,incumbent_p2_5,"
           "incumbent_p97_5\n";
    for (bool pruning : modes) {
      std::size_t n_cp = std::numeric_limits<std::size_t>::max();
      for (const auto& r : out)
        if (r.pruning == pruning) n_cp = std::min(n_cp, r.checkpoints.size());
      if (n_cp == std::numeric_limits<std::size_t>::max()) continue;
      for (std::size_t c = 0; c < n_cp; ++c) {
        std::vector<double> b, inc;
        double runtime = 0.0;
        for (const auto& r : out) {
          if (r.pruning != pruning) continue;
          b.push_back(static_cast<double>(r.checkpoints[c].beliefs));
          inc.push_back(r.checkpoints[c].incumbent);
          runtime = r.checkpoints[c].runtime;
        }
        sum << (pruning ? "on" : "off") << ',' << c << ',' << format_double(runtime) << ','
            << format_double(lower_median(b)) << ',' << format_double(percentile(b, 2.5)) << ','
            << format_double(percentile(b, 97.5)) << ',' << format_double(lower_median(inc)) << ','
            << format_double(percentile(inc, 2.5)) << ',' << format_double(percentile(inc, 97.5)) << '\n';
      }
    }
    write_file(*out_dir + "/benchmark_summary.csv", sum.str());
  }
  return out;
}

}  // namespace mavcal
