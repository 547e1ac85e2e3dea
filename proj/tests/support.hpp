// Shared generators for the test suites.
#pragma once

#include "mavcal/belief.hpp"
#include "mavcal/flat_recovery.hpp"
#include "mavcal/planner.hpp"

#include <random>
#include <vector>

namespace mavtest {

using namespace mavcal;

inline PlannerConfig test_config(double max_segment_time = 3.0) {
  PlannerConfig cfg;
  cfg.limits.segment_time_max = max_segment_time;
  return cfg;
}

// Feasible, recoverable segments chained from hover at the box centre via
// the planner's own connect(). A fresh hover start is used whenever a chain
// gets stuck.
inline std::vector<Segment4D> random_segments(int count, std::uint64_t seed, const PlannerConfig& cfg,
                                              double min_duration = 0.0) {
  std::mt19937_64 rng(seed);
  std::vector<Segment4D> out;
  FlatState from = initial_hover(cfg);
  int misses = 0;
  while (static_cast<int>(out.size()) < count) {
    const RawSample s = sample_state(cfg.limits.box_min, cfg.limits.box_max, rng);
    auto c = connect(from, s, cfg.limits.segment_time_max, cfg, rng, false);
    if (!c || c->segment.duration() < min_duration) {
      if (++misses > 50) {
        from = initial_hover(cfg);
        misses = 0;
      }
      continue;
    }
    misses = 0;
    out.push_back(c->segment);
    from = c->end;
  }
  return out;
}

inline ParameterVector perturbed(const ParameterVector& theta, double fraction, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.0 - fraction, 1.0 + fraction);
  Vec6 v = theta.as_vector();
  for (int i = 0; i < 6; ++i) v[i] *= u(rng);
  return ParameterVector::from_vector(v);
}

// A recovered nominal point with moderate random derivatives, then given a
// random body velocity and parameter vector so that every Jacobian block is
// exercised.
inline NominalPoint random_nominal(std::mt19937_64& rng, const RotorGeometry& geom) {
  std::normal_distribution<double> n01(0.0, 1.0);
  auto vec = [&](double s) { return Vec3(s * n01(rng), s * n01(rng), s * n01(rng)); };
  for (;;) {
    FlatState f;
    f.position = vec(0.5);
    f.velocity = vec(1.0);
    f.acceleration = vec(1.5);
    f.jerk = vec(2.0);
    f.snap = vec(4.0);
    f.yaw = 3.0 * n01(rng);
    f.yaw_rate = 0.5 * n01(rng);
    f.yaw_acceleration = 0.5 * n01(rng);
    const ParameterVector theta = perturbed(ParameterVector{}, 0.4, rng);
    try {
      NominalPoint p = flat_to_full(f, geom, theta);
      return p;
    } catch (const SingularityError&) {
    }
  }
}

// x (+) dx on the error manifold.
inline FullState retract(const FullState& x, const Vector18& dx) {
  FullState y = x;
  y.p_W += dx.segment<3>(0);
  y.v_B += dx.segment<3>(3);
  y.q = quat_compose(x.q, dx.segment<3>(6));
  y.omega_B += dx.segment<3>(9);
  y.theta = ParameterVector::from_vector(x.theta.as_vector() + dx.segment<6>(12));
  return y;
}

// Exact rate of the error coordinates of y relative to a nominal x when both
// evolve under the same input. dPsi = 2 vec(dq) / w(dq), dq = x.q^-1 y.q.
inline Vector18 error_rate(const FullState& x, const FullState& y, const InputVector& n, const RotorGeometry& geom) {
  const StateDerivative fx = dynamics_derivative(x, n, geom);
  const StateDerivative fy = dynamics_derivative(y, n, geom);
  Vector18 r;
  r.segment<3>(0) = fy.p_dot - fx.p_dot;
  r.segment<3>(3) = fy.v_dot - fx.v_dot;
  const Quat dq = x.q.conjugate() * y.q;
  const Quat wy(0.0, y.omega_B.x(), y.omega_B.y(), y.omega_B.z());
  const Quat wx(0.0, x.omega_B.x(), x.omega_B.y(), x.omega_B.z());
  Quat ddq;
  ddq.coeffs() = 0.5 * ((dq * wy).coeffs() - (wx * dq).coeffs());
  r.segment<3>(6) = 2.0 * (ddq.vec() * dq.w() - dq.vec() * ddq.w()) / (dq.w() * dq.w());
  r.segment<3>(9) = fy.omega_dot - fx.omega_dot;
  r.segment<6>(12) = fy.theta_dot - fx.theta_dot;
  return r;
}

// Central differences of error_rate, one column per error coordinate.
inline Matrix18 numeric_error_jacobian(const NominalPoint& p, const RotorGeometry& geom) {
  const FullState& x = p.state;
  const Vec6 th = x.theta.as_vector();
  Matrix18 A;
  for (int i = 0; i < kErrorDim; ++i) {
    const double h = i >= 12 ? 1e-4 * th[i - 12] : 1e-6;
    Vector18 d = Vector18::Zero();
    d[i] = h;
    A.col(i) = (error_rate(x, retract(x, d), p.input, geom) - error_rate(x, retract(x, -d), p.input, geom)) / (2 * h);
  }
  return A;
}

// Worst entry error scaled by the entry itself or, for small entries, by the
// largest entry of its column.
inline double scaled_jacobian_error(const Matrix18& analytic, const Matrix18& numeric) {
  double worst = 0.0;
  for (int j = 0; j < kErrorDim; ++j) {
    const double col = numeric.col(j).cwiseAbs().maxCoeff();
    for (int i = 0; i < kErrorDim; ++i) {
      const double scale = std::max({std::abs(numeric(i, j)), 1e-3 * col, 1e-9});
      worst = std::max(worst, std::abs(analytic(i, j) - numeric(i, j)) / scale);
    }
  }
  return worst;
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace mavtest
