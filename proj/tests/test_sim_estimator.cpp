#include "mavcal/sim_estimator.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mavcal;

namespace {

const RotorGeometry kHexa = RotorGeometry::hexacopter();

NoiseConfig exact_measurements() {
  NoiseConfig n;
  n.position_var.setZero();
  n.attitude_var.setZero();
  return n;
}

Trajectory short_trajectory(std::uint64_t seed, double budget = 4.0) {
  PlannerConfig cfg;
  cfg.termination = TerminationMode::Iterations;
  cfg.iterations = 60;
  cfg.budget = budget;
  cfg.seed = seed;
  return plan(cfg).trajectory;
}

FullState hover_state() {
  FullState s;
  s.p_W = Vec3(0.0, 0.0, 1.0);
  return s;
}

InputVector hover_input() {
  return InputVector::Constant(6, std::sqrt(kHexa.mass * kGravity / (6 * ParameterVector{}.c_T)));
}

}  // namespace

TEST(Synthesize, ExactMeasurementsEqualNominal) {
  const Trajectory t = short_trajectory(1);
  std::mt19937_64 rng(1);
  const MeasurementStream s = synthesize(t, kHexa, ParameterVector{}, exact_measurements(), rng);
  ASSERT_EQ(s.records.size(), s.nominal.size());
  EXPECT_EQ(s.records.size(), static_cast<std::size_t>(std::floor(t.duration() * 100 + 1e-9)) + 1);
  for (std::size_t k = 0; k < s.records.size(); ++k) {
    EXPECT_EQ(s.records[k].z_p, s.nominal[k].state.p_W);
    EXPECT_LT((canonical(s.nominal[k].state.q).coeffs() - s.records[k].z_q.coeffs()).norm(), 1e-15);
    EXPECT_EQ(s.records[k].input, s.nominal[k].input);
    EXPECT_NEAR(s.records[k].t, k * 0.01, 1e-12);
  }
  EXPECT_NO_THROW(s.validate());
}

TEST(Synthesize, PositionNoiseHasConfiguredVariance) {
  std::mt19937_64 rng(2);
  const NoiseConfig noise;
  const MeasurementStream s = synthesize_hover(Vec3(0, 0, 1), 0.3, 100.0, kHexa, ParameterVector{}, noise, rng);
  ASSERT_GE(s.records.size(), 10000u);
  Vec3 sum = Vec3::Zero();
  for (std::size_t k = 0; k < s.records.size(); ++k) {
    const Vec3 r = s.records[k].z_p - s.nominal[k].state.p_W;
    sum += r.cwiseAbs2();
    EXPECT_NEAR(s.records[k].z_q.norm(), 1.0, 1e-12);
  }
  const Vec3 var = sum / static_cast<double>(s.records.size());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(var[i] / noise.position_var[i], 1.0, 0.1);
}

TEST(MeasurementStream, ValidationCatchesBadSpacing) {
  std::mt19937_64 rng(3);
  MeasurementStream s = synthesize_hover(Vec3(0, 0, 1), 0.0, 0.1, kHexa, ParameterVector{}, NoiseConfig{}, rng);
  EXPECT_NO_THROW(s.validate());
  s.records[3].t += 0.003;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.records[3].t = s.records[2].t;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Estimate, TruthIsAFixedPointWithoutNoise) {
  const Trajectory t = short_trajectory(4);
  std::mt19937_64 rng(4);
  const ParameterVector truth;
  // Closed-model synthesis integrates the same model the filter predicts
  // with, so every innovation is zero.
  const MeasurementStream s = synthesize(t, kHexa, truth, exact_measurements(), rng, SynthesisMode::ClosedModel);
  const EstimationRun run = estimate(s, kHexa, truth, default_prior(truth), NoiseConfig{});
  ASSERT_FALSE(run.diverged);
  EXPECT_EQ(run.size(), s.records.size());
  const Vec6 ref = truth.as_vector();
  double worst = 0.0;
  for (const auto& th : run.theta) worst = std::max(worst, ((th - ref).array() / ref.array()).abs().maxCoeff());
  EXPECT_LT(worst, 1e-6);
  for (const auto& sg : run.sigma) EXPECT_TRUE((sg.array() > 0).all());
}

TEST(Estimate, CovarianceMatchesPlannerPathway) {
  // Without the mean correction and with nominal linearisation the filter's
  // covariance must equal the planner's sequential propagation.
  const Trajectory t = short_trajectory(5);
  PlannerConfig cfg;
  std::mt19937_64 rng(5);
  const MeasurementStream s = synthesize(t, kHexa, cfg.theta_plan, cfg.noise, rng);
  EstimatorOptions opt;
  opt.state_update = false;
  opt.nominal_linearization = true;
  const EstimationRun run = estimate(s, kHexa, cfg.theta_plan, cfg.prior(), cfg.noise, opt);
  ASSERT_FALSE(run.diverged);

  std::vector<LinearizedSystem> systems;
  for (std::size_t k = 1; k < s.nominal.size(); ++k) systems.push_back(linearize(s.nominal[k - 1], kHexa, cfg.noise, 0.01));
  const Covariance seq = propagate_sequential(cfg.prior(), systems);
  EXPECT_LT(mavtest::rel_frobenius(run.final_sigma, seq), 1e-8);
}

TEST(Estimate, HoverIdentifiesThrustOnly) {
  std::mt19937_64 rng(6);
  const ParameterVector truth;
  ParameterVector guess = truth;
  guess.c_T *= 1.3;
  guess.j_z *= 0.7;
  const NoiseConfig noise;
  const MeasurementStream s = synthesize_hover(Vec3(0, 0, 1), 0.0, 10.0, kHexa, truth, noise, rng);
  const EstimationRun run = estimate(s, kHexa, guess, default_prior(guess), noise);
  ASSERT_FALSE(run.diverged);
  EXPECT_LT(std::abs(run.theta.back()[0] - truth.c_T) / truth.c_T, 0.05);
  EXPECT_GT(run.sigma.back()[5], 0.9 * run.sigma.front()[5]);
}

TEST(Estimate, DivergenceIsFlaggedNotThrown) {
  std::mt19937_64 rng(7);
  const ParameterVector truth;
  const MeasurementStream s = synthesize_hover(Vec3(0, 0, 1), 0.0, 1.0, kHexa, truth, NoiseConfig{}, rng);
  EstimatorOptions opt;
  opt.divergence_factor = 1e-3;  // any step trips it
  const EstimationRun run = estimate(s, kHexa, truth, default_prior(truth), NoiseConfig{}, opt);
  EXPECT_TRUE(run.diverged);
  EXPECT_EQ(run.diverged_at, 1);
  EXPECT_EQ(run.size(), s.records.size());
}

TEST(Estimate, RejectsNonPositiveGuess) {
  std::mt19937_64 rng(8);
  const MeasurementStream s = synthesize_hover(Vec3(0, 0, 1), 0.0, 0.2, kHexa, ParameterVector{}, NoiseConfig{}, rng);
  ParameterVector bad;
  bad.c_M = -0.01;
  EXPECT_THROW(estimate(s, kHexa, bad, default_prior(ParameterVector{}), NoiseConfig{}), std::invalid_argument);
}

TEST(ConvergenceTime, Examples) {
  std::vector<double> t, x;
  for (int k = 0; k <= 80; ++k) t.push_back(0.1 * k);
  // At truth throughout.
  x.assign(t.size(), 2.0);
  EXPECT_EQ(convergence_time(t, x, 2.0, 0.05), 0.0);
  // Inside from 3 s, out at 4 s, back in from 6 s.
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double tk = t[k];
    x[k] = (tk < 3.0 - 1e-9) ? 3.0 : (tk < 4.0 - 1e-9 ? 2.01 : (tk < 6.0 - 1e-9 ? 2.5 : 2.05));
  }
  const auto c = convergence_time(t, x, 2.0, 0.05);
  ASSERT_TRUE(c);
  EXPECT_NEAR(*c, 6.0, 1e-12);
  // Never converges.
  x.assign(t.size(), 3.0);
  EXPECT_FALSE(convergence_time(t, x, 2.0, 0.05));
  EXPECT_THROW(convergence_time(t, x, 2.0, 1.5), std::invalid_argument);
}

TEST(ConvergenceTime, MatchesBruteForceScan) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> t, x;
    double v = 1.0 + 0.2 * n(rng);
    for (int k = 0; k < 100; ++k) {
      t.push_back(0.01 * k);
      v += 0.02 * n(rng) - 0.05 * (v - 1.0);
      x.push_back(v);
    }
    std::optional<double> expect;
    for (std::size_t k = 0; k < t.size(); ++k) {
      bool stays = true;
      for (std::size_t j = k; j < t.size(); ++j) stays = stays && std::abs(x[j] - 1.0) < 0.05;
      if (stays) {
        expect = t[k];
        break;
      }
    }
    EXPECT_EQ(convergence_time(t, x, 1.0, 0.05), expect);
  }
}

TEST(IntegrateDynamics, FreeFall) {
  FullState x0 = hover_state();
  x0.theta.c_D = 0.0;
  const std::vector<InputVector> u(1001, InputVector::Zero(6));
  const auto xs = integrate_dynamics(x0, u, 1e-3, kHexa);
  ASSERT_EQ(xs.size(), u.size());
  EXPECT_NEAR(xs.back().p_W.z(), 1.0 - 0.5 * kGravity, 1e-6);
}

TEST(IntegrateDynamics, HoverHolds) {
  const std::vector<InputVector> u(1001, hover_input());
  const auto xs = integrate_dynamics(hover_state(), u, 1e-3, kHexa);
  EXPECT_LT((xs.back().p_W - Vec3(0, 0, 1)).norm(), 1e-6);
}

TEST(IntegrateDynamics, FourthOrderConvergence) {
  FullState x0 = hover_state();
  x0.v_B = Vec3(0.5, -0.2, 0.1);
  x0.omega_B = Vec3(0.4, -0.3, 0.8);
  auto run = [&](double dt) {
    const int n = static_cast<int>(std::lround(1.0 / dt));
    // Constant but unequal speeds: linear input interpolation is then exact.
    InputVector v = hover_input();
    for (int i = 0; i < 6; ++i) v[i] *= 1.0 + 0.05 * std::sin(i + 1.0);
    const std::vector<InputVector> u(n + 1, v);
    return integrate_dynamics(x0, u, dt, kHexa).back().p_W;
  };
  const Vec3 ref = run(1e-4);
  const double e1 = (run(0.02) - ref).norm();
  const double e2 = (run(0.01) - ref).norm();
  EXPECT_GT(e1 / e2, 10.0);
  EXPECT_LT(e1 / e2, 22.0);
}

TEST(IntegrateDynamics, NonFiniteStateNamesTheStep) {
  std::vector<InputVector> u(5, hover_input());
  u[3][0] = std::numeric_limits<double>::infinity();
  try {
    integrate_dynamics(hover_state(), u, 1e-2, kHexa);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 3"), std::string::npos) << e.what();
  }
}
