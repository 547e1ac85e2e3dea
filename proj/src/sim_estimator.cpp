#include "mavcal/sim_estimator.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mavcal {

namespace {

Vec3 draw(const Vec3& var, std::normal_distribution<double>& n01, std::mt19937_64& rng) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = std::sqrt(var[i]) * n01(rng);
  return v;
}

void check_synthesis_noise(const NoiseConfig& noise) {
  if (!(noise.rate > 0.0) || !std::isfinite(noise.rate)) throw std::invalid_argument("noise.rate must be positive");
  if ((noise.position_var.array() < 0.0).any() || (noise.attitude_var.array() < 0.0).any()) {
    throw std::invalid_argument("measurement variances must be non-negative");
  }
}

MeasurementStream from_nominal(std::vector<NominalPoint> nominal, const std::vector<FullState>& actual,
                               const NoiseConfig& noise, std::mt19937_64& rng) {
  MeasurementStream s;
  s.rate = noise.rate;
  std::normal_distribution<double> n01(0.0, 1.0);
  s.records.reserve(nominal.size());
  for (std::size_t k = 0; k < nominal.size(); ++k) {
    const Vec3 np = draw(noise.position_var, n01, rng);
    const Vec3 nq = draw(noise.attitude_var, n01, rng);
    const PoseMeasurement z = measure(actual[k], np, nq);
    s.records.push_back({nominal[k].timestamp, z.position, canonical(z.attitude), nominal[k].input});
  }
  s.nominal = std::move(nominal);
  return s;
}

}  // namespace

void MeasurementStream::validate() const {
  if (!(rate > 0.0)) throw std::invalid_argument("stream rate must be positive");
  const double step = 1.0 / rate;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (k > 0) {
      if (!(r.t > records[k - 1].t)) throw std::invalid_argument("timestamps not strictly increasing at record " + std::to_string(k));
      if (std::abs(r.t - records[k - 1].t - step) > 1e-9) {
        throw std::invalid_argument("non-uniform sample spacing at record " + std::to_string(k));
      }
      if (r.input.size() != records[0].input.size()) throw std::invalid_argument("rotor count changes at record " + std::to_string(k));
    }
    if (std::abs(r.z_q.norm() - 1.0) > 1e-9) throw std::invalid_argument("non-unit quaternion at record " + std::to_string(k));
    if (!r.z_p.allFinite() || !r.input.allFinite()) throw std::invalid_argument("non-finite record " + std::to_string(k));
  }
  if (!nominal.empty() && nominal.size() != records.size()) {
    throw std::invalid_argument("nominal points do not match the records");
  }
}

MeasurementStream synthesize(const Trajectory& traj, const RotorGeometry& geom, const ParameterVector& theta_true,
                             const NoiseConfig& noise, std::mt19937_64& rng, SynthesisMode mode) {
  check_synthesis_noise(noise);
  const double duration = traj.duration();
  const double dt = 1.0 / noise.rate;
  const auto n = static_cast<std::size_t>(std::floor(duration * noise.rate + 1e-9));
  std::vector<NominalPoint> nominal;
  nominal.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * dt;
    nominal.push_back(flat_to_full(evaluate(traj, std::min(t, duration)), geom, theta_true, t));
  }
  std::vector<FullState> actual;
  actual.reserve(nominal.size());
  if (mode == SynthesisMode::PerfectTracking) {
    for (const auto& p : nominal) actual.push_back(p.state);
  } else {
    std::vector<InputVector> inputs;
    for (const auto& p : nominal) inputs.push_back(p.input);
    actual = integrate_dynamics(nominal.front().state, inputs, dt, geom);
  }
  return from_nominal(std::move(nominal), actual, noise, rng);
}

MeasurementStream synthesize_hover(const Vec3& position, double yaw, double duration, const RotorGeometry& geom,
                                   const ParameterVector& theta_true, const NoiseConfig& noise,
                                   std::mt19937_64& rng) {
  check_synthesis_noise(noise);
  if (!(duration > 0.0)) throw std::invalid_argument("hover duration must be positive");
  const auto n = static_cast<std::size_t>(std::floor(duration * noise.rate + 1e-9));
  const FlatState hover = FlatState::hover(position, yaw);
  std::vector<NominalPoint> nominal;
  std::vector<FullState> actual;
  for (std::size_t k = 0; k <= n; ++k) {
    nominal.push_back(flat_to_full(hover, geom, theta_true, static_cast<double>(k) / noise.rate));
    actual.push_back(nominal.back().state);
  }
  return from_nominal(std::move(nominal), actual, noise, rng);
}

// ---------------------------------------------------------------------------

EstimationRun estimate(const MeasurementStream& stream, const RotorGeometry& geom, const ParameterVector& theta_guess,
                       const Covariance& sigma0, const NoiseConfig& noise, const EstimatorOptions& options) {
  stream.validate();
  theta_guess.validate();
  noise.validate();
  if (stream.records.empty()) throw std::invalid_argument("empty measurement stream");
  if (options.nominal_linearization && stream.nominal.empty()) {
    throw std::invalid_argument("nominal linearisation requires a synthesised stream");
  }

  const double dt = stream.dt();
  const auto& recs = stream.records;
  const MeasurementMatrix H = pose_measurement_matrix();
  const Eigen::MatrixXd R = pose_measurement_noise(noise);

  FullState x;
  if (!stream.nominal.empty()) {
    x = stream.nominal.front().state;
  } else {
    x.p_W = recs.front().z_p;
    x.q = recs.front().z_q;
  }
  x.theta = theta_guess;
  Covariance sigma = sigma0;
  const Vec6 sigma_init = parameter_block(sigma0).diagonal().cwiseSqrt();

  EstimationRun run;
  run.t.reserve(recs.size());
  run.theta.reserve(recs.size());
  run.sigma.reserve(recs.size());
  run.dopt.reserve(recs.size());
  auto record = [&](double t) {
    run.t.push_back(t);
    run.theta.push_back(x.theta.as_vector());
    run.sigma.push_back(parameter_block(sigma).diagonal().cwiseMax(0.0).cwiseSqrt());
    double d = 0.0;
    try {
      d = d_optimality(parameter_block(sigma));
    } catch (const NumericalError&) {
      d = std::numeric_limits<double>::quiet_NaN();
    }
    run.dopt.push_back(d);
  };
  record(recs.front().t);

  for (std::size_t k = 1; k < recs.size(); ++k) {
    if (!run.diverged) {
      try {
        NominalPoint lin;
        if (options.nominal_linearization) {
          lin = stream.nominal[k - 1];
        } else {
          lin.state = x;
          lin.input = recs[k - 1].input;
          lin.timestamp = recs[k - 1].t;
          lin.angular_acceleration = dynamics_derivative(x, lin.input, geom).omega_dot;
        }
        const LinearizedSystem sys = linearize(lin, geom, noise, dt);

        // Mean prediction with the current parameter estimate.
        x = rk4_step(x, recs[k - 1].input, recs[k].input, geom, dt);

        const Covariance prior = sys.F * sigma * sys.F.transpose() + sys.Q;
        const Eigen::MatrixXd S = H * prior * H.transpose() + R;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
        const double lmin = eig.eigenvalues().minCoeff();
        if (!(lmin > 0.0) || eig.eigenvalues().maxCoeff() / lmin > kMaxCondition) {
          throw NumericalError("innovation covariance is ill-conditioned");
        }
        const Eigen::MatrixXd PHt = prior * H.transpose();
        const Eigen::MatrixXd K = S.llt().solve(PHt.transpose()).transpose();
        sigma = symmetrized((Matrix18::Identity() - K * H) * prior);

        if (options.state_update) {
          Quat z_q = recs[k].z_q;
          if (x.q.dot(z_q) < 0.0) z_q.coeffs() = -z_q.coeffs();
          Eigen::Matrix<double, 6, 1> r;
          r.head<3>() = recs[k].z_p - x.p_W;
          r.tail<3>() = quat_error(x.q, z_q);
          const Vector18 dx = K * r;
          x.p_W += dx.segment<3>(0);
          x.v_B += dx.segment<3>(3);
          x.q = quat_compose(x.q, dx.segment<3>(6));
          x.omega_B += dx.segment<3>(9);
          x.theta = ParameterVector::from_vector(x.theta.as_vector() + dx.segment<6>(kParamOffset));
        }

        const Vec6 s = parameter_block(sigma).diagonal().cwiseMax(0.0).cwiseSqrt();
        const bool finite = sigma.allFinite() && x.p_W.allFinite() && x.v_B.allFinite() &&
                            x.q.coeffs().allFinite() && x.omega_B.allFinite() && x.theta.as_vector().allFinite();
        if (!finite || (s.array() > options.divergence_factor * sigma_init.array()).any()) {
          throw NumericalError("filter diverged");
        }
      } catch (const std::exception&) {
        run.diverged = true;
        run.diverged_at = static_cast<int>(k);
      }
    }
    // After divergence the last estimate is held so the history keeps its length.
    record(recs[k].t);
  }
  run.final_sigma = sigma;
  run.final_sigma_theta = parameter_block(sigma);
  run.final_state = x;
  return run;
}

std::optional<double> convergence_time(const std::vector<double>& t, const std::vector<double>& estimate,
                                       double truth, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  if (t.size() != estimate.size()) throw std::invalid_argument("history length mismatch");
  if (t.empty()) return std::nullopt;
  auto inside = [&](std::size_t k) { return std::abs(estimate[k] - truth) < threshold * std::abs(truth); };
  std::size_t k = t.size();
  while (k > 0 && inside(k - 1)) --k;
  if (k == t.size()) return std::nullopt;
  return t[k];
}

std::array<std::optional<double>, 6> convergence_time(const EstimationRun& run, const ParameterVector& theta_true,
                                                      double threshold) {
  std::array<std::optional<double>, 6> out;
  const Vec6 truth = theta_true.as_vector();
  std::vector<double> h(run.size());
  for (int i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < run.size(); ++k) h[k] = run.theta[k][i];
    out[i] = convergence_time(run.t, h, truth[i], threshold);
  }
  return out;
}

std::vector<FullState> integrate_dynamics(const FullState& x0, const std::vector<InputVector>& inputs, double dt,
                                          const RotorGeometry& geom, const std::vector<Vec6>* noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("integration step must be positive");
  if (noise && noise->size() + 1 < inputs.size()) throw std::invalid_argument("too few process noise draws");
  std::vector<FullState> out;
  if (inputs.empty()) return out;
  out.reserve(inputs.size());
  out.push_back(x0);
  for (std::size_t k = 0; k + 1 < inputs.size(); ++k) {
    const Vec6 w = noise ? (*noise)[k] : Vec6::Zero();
    FullState next = rk4_step(out.back(), inputs[k], inputs[k + 1], geom, dt, w);
    if (!next.p_W.allFinite() || !next.v_B.allFinite() || !next.q.coeffs().allFinite() || !next.omega_B.allFinite()) {
      throw NumericalError("non-finite state at integration step " + std::to_string(k + 1));
    }
    out.push_back(std::move(next));
  }
  return out;
}

}  // namespace mavcal
