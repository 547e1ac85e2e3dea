#include "mavcal/config.hpp"
#include "mavcal/io.hpp"
#include "mavcal/study.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace mavcal;

namespace {

bool mentions(const ConfigError& e, const std::string& needle) {
  for (const auto& v : e.violations())
    if (v.find(needle) != std::string::npos) return true;
  return false;
}

std::string tmp_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("mavcal_test_" + name);
  std::filesystem::remove_all(d);
  return d.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MAVCAL_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One fast deterministic outcome with a hand-made estimate history.
TrajectoryOutcome fake_outcome(double conv, double dopt, std::vector<double> cT_history) {
  TrajectoryOutcome o;
  o.ok = true;
  o.final_dopt = dopt;
  const ParameterVector truth;
  for (std::size_t k = 0; k < cT_history.size(); ++k) {
    o.run.t.push_back(0.01 * k);
    Vec6 th = truth.as_vector();
    th[0] = cT_history[k];
    o.run.theta.push_back(th);
  }
  for (auto& c : o.convergence) c = conv;
  if (!std::isfinite(conv)) o.convergence.fill(std::nullopt);
  return o;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const RunConfig cfg = parse_config("");
  EXPECT_EQ(parse_config(save_config(cfg)), cfg);
  EXPECT_EQ(save_config(parse_config(save_config(cfg))), save_config(cfg));
}

TEST(Config, EditedValuesRoundTrip) {
  RunConfig cfg = parse_config("");
  cfg.planner.budget = 13.25;
  cfg.planner.seed = 99;
  cfg.planner.limits.box_min = Vec3(-1.5, -2.0, 0.25);
  cfg.theta_true.j_x = 0.0123456789;
  cfg.guess_policy = GuessPolicy::Fixed;
  cfg.runs = 7;
  cfg.output_dir = "somewhere/else";
  const RunConfig back = parse_config(save_config(cfg));
  EXPECT_EQ(back, cfg);
  EXPECT_EQ(back.planner.limits.box_min, cfg.planner.limits.box_min);
  EXPECT_EQ(back.theta_true.j_x, cfg.theta_true.j_x);
}

TEST(Config, MinimalFileEchoIsStable) {
  const std::string text =
      "# box and budget only\n"
      "[box]\nmin = -3, -3, 0.5\nmax = 3, 3, 2.5\n"
      "[planner]\nbudget = 12\n";
  const RunConfig cfg = parse_config(text);
  EXPECT_EQ(cfg.planner.budget, 12.0);
  EXPECT_EQ(cfg.planner.limits.box_min, Vec3(-3, -3, 0.5));
  const std::string echo = save_config(cfg);
  EXPECT_EQ(save_config(parse_config(echo)), echo);
  // Dotted keys and section headers are interchangeable.
  EXPECT_EQ(parse_config("box.min = -3,-3,0.5\nbox.max = 3,3,2.5\nplanner.budget = 12"), cfg);
}

TEST(Config, NegativeBudgetIsNamed) {
  try {
    parse_config("planner.budget = -4");
    FAIL() << "expected a configuration error";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "planner.budget"));
  }
}

TEST(Config, AllViolationsReportedTogether) {
  try {
    parse_config("planner.budget = 5\nplanner.bogus = 1\nplanner.budget = 6\nstudy.runs = 0\nnoise.rate = abc\n");
    FAIL() << "expected a configuration error";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "planner.bogus: unknown key"));
    EXPECT_TRUE(mentions(e, "planner.budget: duplicate key"));
    EXPECT_TRUE(mentions(e, "study.runs"));
    EXPECT_TRUE(mentions(e, "noise.rate"));
    EXPECT_GE(e.violations().size(), 4u);
  }
}

TEST(Config, MalformedLinesAndValues) {
  EXPECT_THROW(parse_config("[planner\nbudget = 3"), ConfigError);
  EXPECT_THROW(parse_config("just words"), ConfigError);
  EXPECT_THROW(parse_config("box.min = 1, 2"), ConfigError);
  EXPECT_THROW(parse_config("planner.mode = sometimes"), ConfigError);
  EXPECT_THROW(parse_config("box.min = 3,3,3\nbox.max = 1,1,1"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/mavcal.cfg"), ConfigError);
}

TEST(Config, FixedGuessDefaultsToTruth) {
  const RunConfig cfg = parse_config("theta_guess.policy = fixed\ntheta_true.jx = 0.02");
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_guess(cfg, rng).as_vector(), cfg.theta_true.as_vector());
}

TEST(Config, UniformGuessStaysInsideFraction) {
  RunConfig cfg = parse_config("theta_guess.fraction = 0.3");
  std::mt19937_64 rng(2);
  const Vec6 truth = cfg.theta_true.as_vector();
  Vec6 lo = Vec6::Constant(10), hi = Vec6::Constant(-10);
  for (int k = 0; k < 2000; ++k) {
    const Vec6 r = sample_guess(cfg, rng).as_vector().array() / truth.array();
    lo = lo.cwiseMin(r);
    hi = hi.cwiseMax(r);
  }
  EXPECT_GE(lo.minCoeff(), 0.7);
  EXPECT_LE(hi.maxCoeff(), 1.3);
  EXPECT_LT(lo.maxCoeff(), 0.72);
  EXPECT_GT(hi.minCoeff(), 1.28);
}

TEST(Config, RunSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(run_seed(7, i));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(run_seed(7, 3), run_seed(7, 3));
  EXPECT_NE(run_seed(7, 3), run_seed(8, 3));
}

TEST(Stats, LowerMedianAndPercentile) {
  EXPECT_EQ(lower_median({3, 1, 2}), 2.0);
  EXPECT_EQ(lower_median({4, 1, 3, 2}), 2.0);
  EXPECT_EQ(lower_median({5}), 5.0);
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(lower_median({1, inf, inf}), inf);
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i);
  EXPECT_EQ(percentile(v, 2.5), 1.0);
  EXPECT_EQ(percentile(v, 97.5), 20.0);
  EXPECT_EQ(percentile(v, 50), 10.0);
  EXPECT_EQ(percentile(v, 0), 1.0);
  EXPECT_EQ(percentile(v, 100), 20.0);
  EXPECT_THROW(lower_median({}), std::invalid_argument);
  EXPECT_THROW(percentile(v, 101), std::invalid_argument);
}

TEST(Stats, AggregateByHand) {
  const double c = ParameterVector{}.c_T;
  const double inf = std::numeric_limits<double>::infinity();
  // Relative errors of the three histories: run-wise lower median drops
  // below 0.05 for good from record 2.
  const TrajectoryOutcome a = fake_outcome(1.0, 3.0, {1.5 * c, 1.2 * c, 1.01 * c, 1.0 * c});
  const TrajectoryOutcome b = fake_outcome(2.0, 1.0, {1.5 * c, 1.01 * c, 1.02 * c, 1.03 * c});
  const TrajectoryOutcome d = fake_outcome(inf, 2.0, {1.5 * c, 1.5 * c, 1.5 * c, 1.5 * c});
  TrajectoryOutcome failed;
  failed.error = "boom";
  const StudyAggregate ag = aggregate({&a, &b, &d, &failed}, ParameterVector{}, 0.05);
  EXPECT_EQ(ag.runs, 4u);
  EXPECT_EQ(ag.failed, 1u);
  EXPECT_EQ(ag.conv_median[0], 2.0);
  EXPECT_EQ(ag.conv_lo[0], 1.0);
  EXPECT_EQ(ag.conv_hi[0], inf);
  EXPECT_EQ(ag.dopt_median, 2.0);
  EXPECT_NEAR(ag.conv_of_median[0], 0.02, 1e-12);
  // The other parameters sit at truth from the first record.
  EXPECT_EQ(ag.conv_of_median[3], 0.0);
}

TEST(Io, MeasurementCsvRoundTrip) {
  std::mt19937_64 rng(3);
  const RotorGeometry g = RotorGeometry::hexacopter();
  const MeasurementStream s = synthesize_hover(Vec3(0, 0, 1), 0.2, 0.5, g, ParameterVector{}, NoiseConfig{}, rng);
  std::stringstream ss;
  write_measurements_csv(ss, s);
  std::string header;
  std::getline(std::istringstream(ss.str()), header);
  EXPECT_EQ(header, "t,zpx,zpy,zpz,zqw,zqx,zqy,zqz,n1,n2,n3,n4,n5,n6");
  const MeasurementStream back = read_measurements_csv(ss, 100.0);
  ASSERT_EQ(back.records.size(), s.records.size());
  for (std::size_t k = 0; k < s.records.size(); ++k) {
    EXPECT_EQ(back.records[k].t, s.records[k].t);
    EXPECT_EQ(back.records[k].z_p, s.records[k].z_p);
    EXPECT_LT((back.records[k].z_q.coeffs() - s.records[k].z_q.coeffs()).norm(), 1e-15);
    EXPECT_EQ(back.records[k].input, s.records[k].input);
  }
}

TEST(Io, MalformedMeasurementCsvThrows) {
  std::stringstream ss("t,zpx\n0,1\n");
  EXPECT_THROW(read_measurements_csv(ss, 100.0), std::exception);
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02e23}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Study, NoiselessFixedGuessIsDeterministic) {
  RunConfig cfg = parse_config(
      "planner.mode = iterations\nplanner.iterations = 60\nplanner.budget = 4\n"
      "theta_guess.policy = fixed\nstudy.measurement_noise = false\nstudy.synthesis = closed_model\n");
  const std::string d1 = tmp_dir("study1"), d2 = tmp_dir("study2");
  const StudySummary a = run_study(cfg, 1, d1);
  const StudySummary b = run_study(cfg, 1, d2);
  ASSERT_EQ(a.runs.size(), 1u);
  ASSERT_TRUE(a.runs[0].optimized.ok) << a.runs[0].optimized.error;
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(slurp(d1 + "/summary.json"), slurp(d2 + "/summary.json"));
  // Guess equals truth, measurements are exact and come from the filter's
  // own model: the estimate never moves.
  const Vec6 truth = cfg.theta_true.as_vector();
  EXPECT_LT(((a.runs[0].optimized.final_estimate - truth).array() / truth.array()).abs().maxCoeff(), 1e-6);
  EXPECT_TRUE(std::filesystem::exists(d1 + "/table.txt"));
  EXPECT_TRUE(std::filesystem::exists(d1 + "/run_0/optimized_estimation.csv"));
}

TEST(Cli, ExitCodes) {
  const std::string d = tmp_dir("cli");
  std::filesystem::create_directories(d);
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("plan --bogus-flag"), 1);
  {
    std::ofstream f(d + "/bad.cfg");
    f << "planner.budget = -1\n";
  }
  EXPECT_EQ(run_cli("plan --config " + d + "/bad.cfg --out " + d + "/bad"), 1);
  EXPECT_EQ(run_cli("plan --mode iterations --budget 0.05 --out " + d + "/tiny"), 2);
  EXPECT_EQ(run_cli("plan --mode iterations --budget 4 --seed 5 --out " + d + "/ok"), 0);
  EXPECT_TRUE(std::filesystem::exists(d + "/ok/config.cfg"));
  // The echoed configuration reproduces the run.
  EXPECT_EQ(run_cli("plan --config " + d + "/ok/config.cfg --out " + d + "/again"), 0);
  EXPECT_EQ(slurp(d + "/ok/trajectory.json"), slurp(d + "/again/trajectory.json"));
}
