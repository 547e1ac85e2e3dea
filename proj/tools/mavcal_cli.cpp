// mavcal: plan, validate and benchmark informative calibration flights.

#include "mavcal/config.hpp"
#include "mavcal/io.hpp"
#include "mavcal/planner.hpp"
#include "mavcal/sim_estimator.hpp"
#include "mavcal/study.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <map>
#include <iostream>
#include <sstream>

namespace {

using namespace mavcal;

enum ExitCode { kOk = 0, kValidation = 1, kPlanning = 2, kNumerical = 3 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> runtime;
  std::optional<double> budget;
  std::optional<int> runs;
  std::string pruning = "both";
  std::string mode;
  std::string trajectory;
  std::string measurements;
  bool graph = false;
};

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config.empty() ? parse_config("") : load_config(o.config);
  if (o.seed) cfg.planner.seed = *o.seed;
  if (o.runtime) cfg.planner.runtime = *o.runtime;
  if (o.budget) cfg.planner.budget = *o.budget;
  if (o.runs) cfg.runs = *o.runs;
  if (o.mode == "wallclock") cfg.planner.termination = TerminationMode::WallClock;
  if (o.mode == "iterations") cfg.planner.termination = TerminationMode::Iterations;
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  // Provenance echo of the fully resolved configuration.
  write_file(cfg.output_dir + "/config.cfg", save_config(cfg));
  return cfg;
}

std::string path(const RunConfig& cfg, const std::string& name) { return cfg.output_dir + "/" + name; }

template <typename Writer>
void emit(const std::string& file, Writer&& w) {
  std::ostringstream os;
  w(os);
  write_file(file, os.str());
}

void write_trajectory_outputs(const RunConfig& cfg, const PlannerConfig& pcfg, const Trajectory& traj) {
  write_file(path(cfg, "trajectory.json"), trajectory_to_json(traj).dump(1) + "\n");
  emit(path(cfg, "trajectory.csv"), [&](std::ostream& os) { write_trajectory_csv(os, traj, pcfg.noise.rate); });
  emit(path(cfg, "covariance_trace.csv"),
       [&](std::ostream& os) { write_covariance_trace_csv(os, predicted_covariance_trace(traj, pcfg)); });
}

PlannerConfig planner_config(const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.planner.seed);
  PlannerConfig p = cfg.planner;
  p.theta_plan = sample_guess(cfg, rng);
  return p;
}

int cmd_plan(const Options& o) {
  const RunConfig cfg = resolve(o);
  const PlannerConfig p = planner_config(cfg);
  PlanOutcome r = plan_search(p, initial_hover(p), o.graph);
  if (r.graph) write_file(path(cfg, "graph.json"), r.graph->dump(1) + "\n");
  emit(path(cfg, "checkpoints.csv"), [&](std::ostream& os) { write_checkpoints_csv(os, r.stats.checkpoints); });
  if (!r.trajectory) throw PlanningError("no informative trajectory found");
  write_trajectory_outputs(cfg, p, *r.trajectory);
  std::cout << "vertices " << r.stats.vertices << ", edges " << r.stats.edges << ", beliefs " << r.stats.beliefs
            << ", cost " << r.trajectory->cost << " s, dopt " << r.trajectory->trace.back().dopt_theta << "\n";
  return kOk;
}

int cmd_baseline(const Options& o) {
  const RunConfig cfg = resolve(o);
  const PlannerConfig p = planner_config(cfg);
  const Trajectory t = random_baseline_plan(p);
  write_trajectory_outputs(cfg, p, t);
  std::cout << "segments " << t.segments.size() << ", cost " << t.cost << " s\n";
  return kOk;
}

Trajectory read_trajectory(const std::string& file) {
  std::ifstream f(file);
  if (!f) throw std::invalid_argument("cannot read trajectory '" + file + "'");
  return trajectory_from_json(nlohmann::json::parse(f));
}

int cmd_simulate(const Options& o) {
  const RunConfig cfg = resolve(o);
  if (o.trajectory.empty()) throw std::invalid_argument("simulate needs --trajectory");
  const Trajectory t = read_trajectory(o.trajectory);
  std::mt19937_64 rng(cfg.planner.seed);
  NoiseConfig noise = cfg.planner.noise;
  if (!cfg.measurement_noise) {
    noise.position_var.setZero();
    noise.attitude_var.setZero();
  }
  const MeasurementStream s = synthesize(t, cfg.planner.geometry, cfg.theta_true, noise, rng, cfg.synthesis);
  emit(path(cfg, "measurements.csv"), [&](std::ostream& os) { write_measurements_csv(os, s); });
  emit(path(cfg, "full_state.csv"), [&](std::ostream& os) { write_full_state_csv(os, s.nominal); });
  std::cout << "records " << s.records.size() << "\n";
  return kOk;
}

int cmd_estimate(const Options& o) {
  const RunConfig cfg = resolve(o);
  if (o.measurements.empty()) throw std::invalid_argument("estimate needs --measurements");
  std::ifstream f(o.measurements);
  if (!f) throw std::invalid_argument("cannot read measurements '" + o.measurements + "'");
  const MeasurementStream s = read_measurements_csv(f, cfg.planner.noise.rate);
  const PlannerConfig p = planner_config(cfg);
  const EstimationRun run = estimate(s, p.geometry, p.theta_plan, p.prior(), p.noise);
  emit(path(cfg, "estimation.csv"), [&](std::ostream& os) { write_estimation_csv(os, run); });
  const auto conv = convergence_time(run, cfg.theta_true, cfg.convergence_threshold);
  for (int i = 0; i < 6; ++i) {
    std::cout << kParameterNames[i] << " " << run.theta.back()[i] << " +- " << run.sigma.back()[i] << ", converged ";
    if (conv[i]) {
      std::cout << *conv[i] << " s\n";
    } else {
      std::cout << "never\n";
    }
  }
  if (run.diverged) {
    std::cerr << "filter diverged at record " << run.diverged_at << "\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_study(const Options& o) {
  const RunConfig cfg = resolve(o);
  const StudySummary s =
      run_study(cfg, cfg.runs, cfg.output_dir, [](const std::string& m) { std::cerr << m << "\n"; });
  std::cout << s.table();
  return kOk;
}

int cmd_benchmark(const Options& o) {
  const RunConfig cfg = resolve(o);
  PruningSelection sel = PruningSelection::Both;
  if (o.pruning == "on") sel = PruningSelection::On;
  if (o.pruning == "off") sel = PruningSelection::Off;
  const auto records =
      run_benchmark(cfg, cfg.runs, sel, cfg.output_dir, [](const std::string& m) { std::cerr << m << "\n"; });
  std::cout << "records " << records.size() << ", written to " << cfg.output_dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Informative trajectory planning for multirotor parameter identification"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "configuration file (key = value)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--runtime", o.runtime, "planner runtime in seconds (wallclock mode)");
    sub->add_option("--budget", o.budget, "flight-time budget in seconds");
    sub->add_option("--mode", o.mode, "termination mode")->check(CLI::IsMember({"wallclock", "iterations"}));
  };

  std::map<CLI::App*, int (*)(const Options&)> handlers;
  auto* plan = app.add_subcommand("plan", "plan an informative trajectory");
  common(plan);
  plan->add_flag("--graph", o.graph, "also write the motion graph as graph.json");
  handlers[plan] = cmd_plan;

  auto* baseline = app.add_subcommand("baseline", "random maximum-segment baseline");
  common(baseline);
  handlers[baseline] = cmd_baseline;

  auto* simulate = app.add_subcommand("simulate", "synthesise measurements along a trajectory");
  common(simulate);
  simulate->add_option("--trajectory", o.trajectory, "trajectory JSON")->required();
  handlers[simulate] = cmd_simulate;

  auto* est = app.add_subcommand("estimate", "run the EKF on a measurement CSV");
  common(est);
  est->add_option("--measurements", o.measurements, "measurement CSV")->required();
  handlers[est] = cmd_estimate;

  auto* study = app.add_subcommand("study", "optimized vs random estimation study");
  common(study);
  study->add_option("--runs", o.runs, "number of runs");
  handlers[study] = cmd_study;

  auto* bench = app.add_subcommand("benchmark", "pruning on/off benchmark");
  common(bench);
  bench->add_option("--runs", o.runs, "number of paired runs");
  bench->add_option("--pruning", o.pruning, "pruning modes")->check(CLI::IsMember({"on", "off", "both"}));
  handlers[bench] = cmd_benchmark;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    for (const auto& [sub, handler] : handlers) {
      if (sub->parsed()) return handler(o);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return kValidation;
  } catch (const PlanningError& e) {
    std::cerr << "planning failed: " << e.what() << "\n";
    return kPlanning;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const SingularityError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}
