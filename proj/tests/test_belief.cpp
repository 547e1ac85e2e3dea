#include "mavcal/belief.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mavcal;

namespace {

const RotorGeometry kHexa = RotorGeometry::hexacopter();

Matrix18 random_matrix(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix18 m;
  for (int i = 0; i < kErrorDim; ++i)
    for (int j = 0; j < kErrorDim; ++j) m(i, j) = scale * n(rng);
  return m;
}

Covariance random_psd(std::mt19937_64& rng) {
  const Matrix18 L = random_matrix(rng, 0.1);
  return L * L.transpose() + 1e-6 * Matrix18::Identity();
}

LinearizedSystem random_system(std::mt19937_64& rng) {
  LinearizedSystem s;
  s.F = Matrix18::Identity() + random_matrix(rng, 0.01);
  const Matrix18 g = random_matrix(rng, 0.01);
  s.Q = g * g.transpose();
  s.H = pose_measurement_matrix();
  s.R = pose_measurement_noise(NoiseConfig{}) * 1e4;
  s.dt = 0.01;
  return s;
}

CovarianceTransfer random_transfer(std::mt19937_64& rng, int steps) {
  std::vector<LinearizedSystem> sys;
  for (int k = 0; k < steps; ++k) sys.push_back(random_system(rng));
  return compose_transfer(sys);
}

double transfer_distance(const CovarianceTransfer& a, const CovarianceTransfer& b) {
  auto rel = [](const Matrix18& x, const Matrix18& y) { return (x - y).norm() / std::max(1.0, y.norm()); };
  return std::max({rel(a.A, b.A), rel(a.B, b.B), rel(a.C, b.C), rel(a.D, b.D)});
}

Segment4D hover_segment(double duration) {
  const FlatState h = FlatState::hover(Vec3(0.0, 0.0, 1.0));
  return solve_segment(h, h.position, 0.0, std::nullopt, duration);
}

}  // namespace

TEST(Linearize, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    NominalPoint p = mavtest::random_nominal(rng, kHexa);
    std::normal_distribution<double> n(0.0, 1.0);
    p.state.v_B += Vec3(n(rng), n(rng), n(rng));
    const Matrix18 a = error_jacobian(p, kHexa);
    const Matrix18 fd = mavtest::numeric_error_jacobian(p, kHexa);
    EXPECT_LT(mavtest::scaled_jacobian_error(a, fd), 1e-4) << "point " << k;
  }
}

TEST(Linearize, HoverPositionRowsCoupleOnlyToVelocityAndAttitude) {
  const NominalPoint p = flat_to_full(FlatState::hover(Vec3(0.0, 0.0, 1.0)), kHexa, ParameterVector{});
  const Matrix18 A = error_jacobian(p, kHexa);
  for (int j = 0; j < kErrorDim; ++j) {
    if ((j >= 3 && j < 9)) continue;
    EXPECT_EQ((A.block<3, 1>(0, j).norm()), 0.0) << "column " << j;
  }
  EXPECT_LT((A.block<3, 3>(0, 3) - Mat3::Identity()).norm(), 1e-15);
  // The gravity tilt enters the velocity rows through the attitude error.
  EXPECT_NEAR(A(3, 7), kGravity, 1e-12);
  EXPECT_NEAR(A(4, 6), -kGravity, 1e-12);
}

TEST(Linearize, TransitionTendsToIdentity) {
  std::mt19937_64 rng(2);
  const NominalPoint p = mavtest::random_nominal(rng, kHexa);
  const Matrix18 A = error_jacobian(p, kHexa);
  const auto s = linearize(p, kHexa, NoiseConfig{}, 1e-12);
  EXPECT_LT((s.F - Matrix18::Identity()).norm(), 2e-12 * A.norm());
  // First order: (F - I) / dt approaches the continuous Jacobian.
  const double dt = 1e-7;
  const Matrix18 F = linearize(p, kHexa, NoiseConfig{}, dt).F;
  EXPECT_LT(mavtest::rel_frobenius((F - Matrix18::Identity()) / dt, A), 1e-4);
  EXPECT_LT(s.Q.norm(), 1e-6);
  EXPECT_EQ(s.H.rows(), 6);
  EXPECT_EQ((s.H.block<3, 3>(0, 0)), Mat3::Identity());
  EXPECT_EQ((s.H.block<3, 3>(3, 6)), Mat3::Identity());
  EXPECT_EQ(s.H.norm(), std::sqrt(6.0));
}

TEST(EkfStep, UninformativeMeasurementKeepsPrediction) {
  std::mt19937_64 rng(3);
  const Covariance sigma = random_psd(rng);
  LinearizedSystem s = random_system(rng);
  s.R *= 1e12;
  const Covariance prior = s.F * sigma * s.F.transpose() + s.Q;
  EXPECT_LT(mavtest::rel_frobenius(ekf_step(sigma, s), prior), 1e-6);
}

TEST(EkfStep, PerfectFullStateMeasurementCollapses) {
  std::mt19937_64 rng(4);
  LinearizedSystem s = random_system(rng);
  s.H = MeasurementMatrix::Identity(kErrorDim, kErrorDim);
  s.R = Eigen::MatrixXd::Identity(kErrorDim, kErrorDim) * 1e-14;
  const Covariance post = ekf_step(random_psd(rng), s);
  EXPECT_LT(post.norm(), 1e-12);
}

TEST(EkfStep, PosteriorBelowPredictionInLoewnerOrder) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Covariance sigma = random_psd(rng);
    const LinearizedSystem s = random_system(rng);
    const Covariance prior = s.F * sigma * s.F.transpose() + s.Q;
    const Covariance post = ekf_step(sigma, s);
    const Eigen::SelfAdjointEigenSolver<Matrix18> eig(prior - post);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
    EXPECT_LT((post - post.transpose()).norm(), 1e-9 * post.norm());
  }
}

TEST(EkfStep, IllConditionedInnovationThrows) {
  std::mt19937_64 rng(6);
  LinearizedSystem s = random_system(rng);
  s.R = Eigen::MatrixXd::Zero(6, 6);
  Covariance sigma = Covariance::Zero();
  s.F = Matrix18::Identity();
  s.Q.setZero();
  EXPECT_THROW(ekf_step(sigma, s), NumericalError);
}

TEST(Star, IdentityIsNeutral) {
  std::mt19937_64 rng(7);
  const CovarianceTransfer s = random_transfer(rng, 3);
  EXPECT_LT(transfer_distance(star(CovarianceTransfer::identity(), s), s), 1e-14);
  EXPECT_LT(transfer_distance(star(s, CovarianceTransfer::identity()), s), 1e-14);
}

TEST(Star, Associative) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const auto a = random_transfer(rng, 2);
    const auto b = random_transfer(rng, 2);
    const auto c = random_transfer(rng, 2);
    EXPECT_LT(transfer_distance(star(star(a, b), c), star(a, star(b, c))), 1e-8);
  }
}

TEST(Star, MotionOnlyComposesTransitions) {
  std::mt19937_64 rng(9);
  const auto s1 = random_system(rng);
  const auto s2 = random_system(rng);
  const auto m = star(CovarianceTransfer::motion(s1.F, s1.Q), CovarianceTransfer::motion(s2.F, s2.Q));
  EXPECT_LT((m.A - s2.F * s1.F).norm(), 1e-12);
  EXPECT_LT((m.B - (s2.F * s1.Q * s2.F.transpose() + s2.Q)).norm(), 1e-12);
  EXPECT_EQ(m.C.norm(), 0.0);
}

TEST(Transfer, IdentityLeavesCovarianceUnchanged) {
  std::mt19937_64 rng(10);
  const Covariance s = random_psd(rng);
  EXPECT_LT(mavtest::rel_frobenius(apply_transfer(s, CovarianceTransfer::identity()), s), 1e-15);
}

TEST(Transfer, MatchesSequentialFilterOnSegment) {
  const auto cfg = mavtest::test_config();
  const auto segs = mavtest::random_segments(3, 11, cfg, 1.5);
  for (const auto& seg : segs) {
    const auto systems = edge_systems(seg, cfg.geometry, cfg.theta_plan, cfg.noise);
    EXPECT_EQ(static_cast<int>(systems.size()), edge_step_count(seg.duration(), cfg.noise.rate));
    const Covariance seq = propagate_sequential(cfg.prior(), systems);
    const Covariance one = apply_transfer(cfg.prior(), compose_transfer(systems));
    EXPECT_LT(mavtest::rel_frobenius(one, seq), 1e-8);
  }
}

TEST(Transfer, SingleStepEdge) {
  const auto cfg = mavtest::test_config();
  const Segment4D seg = hover_segment(1.0 / cfg.noise.rate);
  const auto systems = edge_systems(seg, cfg.geometry, cfg.theta_plan, cfg.noise);
  ASSERT_EQ(systems.size(), 1u);
  const auto meas = CovarianceTransfer::measurement(systems[0].H, systems[0].R);
  const auto expected = star(CovarianceTransfer::motion(systems[0].F, systems[0].Q), meas);
  EXPECT_LT(transfer_distance(compose_transfer(systems), expected), 1e-14);
  EXPECT_LT(mavtest::rel_frobenius(apply_transfer(cfg.prior(), expected), ekf_step(cfg.prior(), systems[0])), 1e-10);
}

TEST(Transfer, HoverIdentifiesOnlyThrust) {
  const auto cfg = mavtest::test_config();
  const Covariance s0 = cfg.prior();
  const Covariance s1 = propagate(s0, edge_transfer(hover_segment(2.0), cfg.geometry, cfg.theta_plan, cfg.noise));
  const Vec6 before = parameter_block(s0).diagonal();
  const Vec6 after = parameter_block(s1).diagonal();
  EXPECT_LT(after[0], 0.1 * before[0]);
  for (int i = 1; i < 6; ++i) EXPECT_GT(after[i], 0.99 * before[i]) << kParameterNames[i];
}

TEST(Transfer, PreservesPositiveSemidefiniteness) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 100; ++k) {
    const Covariance s = apply_transfer(random_psd(rng), random_transfer(rng, 1 + k % 5));
    const Eigen::SelfAdjointEigenSolver<Matrix18> eig(s);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(Transfer, ParameterDeterminantNeverIncreases) {
  const auto cfg = mavtest::test_config();
  const auto segs = mavtest::random_segments(5, 13, cfg);
  for (const auto& seg : segs) {
    Covariance s = cfg.prior();
    double prev = parameter_block(s).determinant();
    for (const auto& sys : edge_systems(seg, cfg.geometry, cfg.theta_plan, cfg.noise)) {
      s = ekf_step(s, sys);
      const double det = parameter_block(s).determinant();
      EXPECT_LE(det, prev * (1.0 + 1e-12));
      prev = det;
    }
  }
}

TEST(DOptimality, Examples) {
  EXPECT_NEAR(d_optimality(Eigen::MatrixXd::Identity(6, 6)), 1.0, 1e-15);
  Eigen::MatrixXd m = Eigen::Vector2d(4.0, 1.0).asDiagonal();
  EXPECT_NEAR(d_optimality(m), 2.0, 1e-14);
  EXPECT_NEAR(d_optimality_fast(m), 2.0, 1e-14);
}

TEST(DOptimality, ScalesLinearly) {
  std::mt19937_64 rng(14);
  const Mat6 m = parameter_block(random_psd(rng));
  for (double c : {1e-8, 0.5, 3.0, 1e6}) EXPECT_NEAR(d_optimality(c * m), c * d_optimality(m), 1e-10 * c * d_optimality(m));
}

TEST(DOptimality, LogSpaceAgreesWithDeterminant) {
  std::mt19937_64 rng(15);
  for (int k = 0; k < 50; ++k) {
    const Mat6 m = parameter_block(random_psd(rng));
    const double direct = std::pow(m.determinant(), 1.0 / 6.0);
    EXPECT_NEAR(d_optimality(m), direct, 1e-10 * direct);
    EXPECT_NEAR(d_optimality_fast(m), direct, 1e-10 * direct);
  }
}

TEST(DOptimality, FiniteWhereDeterminantUnderflows) {
  const Mat6 m = Mat6::Identity() * 1e-60;
  EXPECT_EQ(m.determinant(), 0.0);
  EXPECT_NEAR(d_optimality(m), 1e-60, 1e-70);
  EXPECT_NEAR(d_optimality_fast(m), 1e-60, 1e-70);
}

TEST(DOptimality, IndefiniteThrows) {
  Eigen::MatrixXd m = Eigen::Vector2d(1.0, -1e-3).asDiagonal();
  EXPECT_THROW(d_optimality(m), NumericalError);
}

TEST(DefaultPrior, Layout) {
  const ParameterVector th;
  const Covariance s = default_prior(th);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(s(i, i), 1e-6);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(std::sqrt(s(12 + i, 12 + i)), 0.5 * th.as_vector()[i], 1e-18);
  EXPECT_EQ((s - Covariance(s.diagonal().asDiagonal())).norm(), 0.0);
}
