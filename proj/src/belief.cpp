#include "mavcal/belief.hpp"

#include <cmath>
#include <limits>

namespace mavcal {

namespace {

constexpr int kP = 0, kV = 3, kPsi = 6, kW = 9, kTh = kParamOffset;

}  // namespace

Matrix18 error_jacobian(const NominalPoint& point, const RotorGeometry& geom) {
  const FullState& x = point.state;
  const ParameterVector& th = x.theta;
  const Mat3 C = x.q.toRotationMatrix();
  const Mat3 J = th.inertia();
  const Vec3 J_inv(1.0 / th.j_x, 1.0 / th.j_y, 1.0 / th.j_z);
  const Vec3& v = x.v_B;
  const Vec3& w = x.omega_B;
  const Mat3 D = Vec3(th.c_D, th.c_D, 0.0).asDiagonal();
  const Mat3 P = Vec3(1.0, 1.0, 0.0).asDiagonal();
  const Vec3 e_z = Vec3::UnitZ();
  const double m = geom.mass;

  Matrix18 A = Matrix18::Zero();

  // Position: p_dot = C v.
  A.block<3, 3>(kP, kV) = C;
  A.block<3, 3>(kP, kPsi) = -C * skew(v);

  // Sums over rotors.
  double sum_sq = 0.0;
  Vec3 dF_dcT = Vec3::Zero(), dF_dcD = Vec3::Zero();
  Mat3 dF_dw = Mat3::Zero();
  Mat3 dtau_dv = Mat3::Zero(), dtau_dw = Mat3::Zero();
  Vec3 dtau_dcT = Vec3::Zero(), dtau_dcD = Vec3::Zero(), dtau_dcM = Vec3::Zero();
  for (int i = 0; i < geom.rotor_count(); ++i) {
    const Vec3& r = geom.positions[i];
    const double s = point.input[i] * point.input[i];
    const Vec3 u = v + w.cross(r);
    const Mat3 r_x = skew(r);
    sum_sq += s;
    const Vec3 f_unit = s * (e_z - D * u);  // force per unit c_T
    dF_dcT += f_unit;
    dF_dcD += -th.c_T * s * (P * u);
    dF_dw += th.c_T * s * D * r_x;
    dtau_dv += r_x * (-th.c_T * s * D);
    dtau_dw += th.c_T * s * r_x * D * r_x;
    dtau_dcT += -geom.spin[i] * th.c_M * s * e_z + r.cross(f_unit);
    dtau_dcD += r.cross(-th.c_T * s * (P * u));
    dtau_dcM += -geom.spin[i] * th.c_T * s * e_z;
  }

  // Velocity: v_dot = F/m - w x v - C^T G.
  A.block<3, 3>(kV, kV) = -(th.c_T * sum_sq / m) * D - skew(w);
  A.block<3, 3>(kV, kPsi) = -skew(C.transpose() * gravity_vector());
  A.block<3, 3>(kV, kW) = dF_dw / m + skew(v);
  A.block<3, 1>(kV, kTh + 0) = dF_dcT / m;
  A.block<3, 1>(kV, kTh + 1) = dF_dcD / m;

  // Attitude error: dPsi_dot = -w x dPsi + dw.
  A.block<3, 3>(kPsi, kPsi) = -skew(w);
  A.block<3, 3>(kPsi, kW) = Mat3::Identity();

  // Angular velocity: w_dot = J^-1 (tau - w x J w).
  const Mat3 Jinv = J_inv.asDiagonal();
  const Mat3 gyro = skew(w) * J - skew(J * w);
  A.block<3, 3>(kW, kV) = Jinv * dtau_dv;
  A.block<3, 3>(kW, kW) = Jinv * (dtau_dw - gyro);
  A.block<3, 1>(kW, kTh + 0) = Jinv * dtau_dcT;
  A.block<3, 1>(kW, kTh + 1) = Jinv * dtau_dcD;
  A.block<3, 1>(kW, kTh + 2) = Jinv * dtau_dcM;

  // Inertia columns: d/dj_a of J^-1 b = J^-1 (-e_a w_dot_a - w x (e_a w_a)).
  const Vec3 w_dot = dynamics_derivative(x, point.input, geom).omega_dot;
  for (int a = 0; a < 3; ++a) {
    const Vec3 e_a = Vec3::Unit(a);
    A.block<3, 1>(kW, kTh + 3 + a) = Jinv * (-e_a * w_dot[a] - w.cross(e_a * w[a]));
  }
  return A;
}

Eigen::Matrix<double, kErrorDim, 6> noise_jacobian(const ParameterVector& theta, const RotorGeometry& geom) {
  Eigen::Matrix<double, kErrorDim, 6> G = Eigen::Matrix<double, kErrorDim, 6>::Zero();
  G.block<3, 3>(kV, 0) = Mat3::Identity() / geom.mass;
  G.block<3, 3>(kW, 3) = Vec3(1.0 / theta.j_x, 1.0 / theta.j_y, 1.0 / theta.j_z).asDiagonal();
  return G;
}

MeasurementMatrix pose_measurement_matrix() {
  MeasurementMatrix H = MeasurementMatrix::Zero(6, kErrorDim);
  H.block<3, 3>(0, kP) = Mat3::Identity();
  H.block<3, 3>(3, kPsi) = Mat3::Identity();
  return H;
}

Eigen::MatrixXd pose_measurement_noise(const NoiseConfig& noise) {
  Eigen::VectorXd diag(6);
  diag << noise.position_var, noise.attitude_var;
  return diag.asDiagonal();
}

LinearizedSystem linearize(const NominalPoint& point, const RotorGeometry& geom, const NoiseConfig& noise, double dt) {
  LinearizedSystem sys;
  sys.dt = dt;
  sys.F = Matrix18::Identity() + error_jacobian(point, geom) * dt;
  const auto G = noise_jacobian(point.state.theta, geom);
  Vec6 w_var;
  w_var << noise.force_var, noise.moment_var;
  sys.Q = G * w_var.asDiagonal() * G.transpose() * dt;
  sys.H = pose_measurement_matrix();
  sys.R = pose_measurement_noise(noise);
  return sys;
}

Covariance symmetrized(const Covariance& m) { return 0.5 * (m + m.transpose()); }

Covariance ekf_step(const Covariance& sigma, const LinearizedSystem& sys) {
  const Covariance prior = sys.F * sigma * sys.F.transpose() + sys.Q;
  const Eigen::MatrixXd S = sys.H * prior * sys.H.transpose() + sys.R;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kMaxCondition) throw NumericalError("innovation covariance is ill-conditioned");
  const Eigen::MatrixXd PHt = prior * sys.H.transpose();
  const Eigen::MatrixXd K = S.llt().solve(PHt.transpose()).transpose();
  const Covariance posterior = (Matrix18::Identity() - K * sys.H) * prior;
  return symmetrized(posterior);
}

CovarianceTransfer CovarianceTransfer::motion(const Matrix18& F, const Matrix18& Q) {
  CovarianceTransfer s;
  s.A = F;
  s.B = Q;
  s.C = Matrix18::Zero();
  s.D = F.transpose();
  return s;
}

CovarianceTransfer CovarianceTransfer::measurement(const MeasurementMatrix& H, const Eigen::MatrixXd& R) {
  CovarianceTransfer s;
  s.C = -H.transpose() * R.llt().solve(H);
  return s;
}

namespace {

void check_condition(const Eigen::PartialPivLU<Matrix18>& lu) {
  const double rc = lu.rcond();
  if (!(rc > 1.0 / kMaxCondition)) throw NumericalError("star product interconnection is ill-conditioned");
}

}  // namespace

CovarianceTransfer star(const CovarianceTransfer& s1, const CovarianceTransfer& s2) {
  const Matrix18 I = Matrix18::Identity();
  // [[A B][C D]] * [[W X][Y Z]]
  const Eigen::PartialPivLU<Matrix18> lu_by(I - s1.B * s2.C);
  check_condition(lu_by);
  const Eigen::PartialPivLU<Matrix18> lu_yb(I - s2.C * s1.B);
  check_condition(lu_yb);
  CovarianceTransfer out;
  out.A = s2.A * lu_by.solve(s1.A);
  out.B = s2.B + s2.A * lu_by.solve(s1.B * s2.D);
  out.C = s1.C + s1.D * lu_yb.solve(s2.C * s1.A);
  out.D = s1.D * lu_yb.solve(s2.D);
  return out;
}

Covariance apply_transfer(const Covariance& sigma0, const CovarianceTransfer& s) {
  const Eigen::PartialPivLU<Matrix18> lu(Matrix18::Identity() - sigma0 * s.C);
  check_condition(lu);
  const Covariance out = s.B + s.A * lu.solve(sigma0 * s.D);
  if (!out.allFinite()) throw NumericalError("non-finite covariance after transfer");
  return symmetrized(out);
}

int edge_step_count(double t_s, double rate) {
  const double raw = t_s * rate;
  const int n = static_cast<int>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::max(1, n);
}

std::vector<LinearizedSystem> edge_systems(const Segment4D& seg, const RotorGeometry& geom,
                                           const ParameterVector& theta_plan, const NoiseConfig& noise) {
  const double T = seg.duration();
  const int n = edge_step_count(T, noise.rate);
  const double dt = T / n;
  std::vector<LinearizedSystem> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    const NominalPoint p = flat_to_full(evaluate(seg, t), geom, theta_plan, t);
    out.push_back(linearize(p, geom, noise, dt));
  }
  // The terminal sample must be recoverable too; its measurement closes the edge.
  flat_to_full(evaluate(seg, T), geom, theta_plan, T);
  return out;
}

Covariance propagate_sequential(const Covariance& sigma0, const std::vector<LinearizedSystem>& systems) {
  Covariance sigma = sigma0;
  for (const auto& sys : systems) sigma = ekf_step(sigma, sys);
  return sigma;
}

CovarianceTransfer compose_transfer(const std::vector<LinearizedSystem>& systems) {
  CovarianceTransfer total = CovarianceTransfer::identity();
  if (systems.empty()) return total;
  const CovarianceTransfer meas = CovarianceTransfer::measurement(systems.front().H, systems.front().R);
  for (const auto& sys : systems) {
    const CovarianceTransfer step = star(CovarianceTransfer::motion(sys.F, sys.Q), meas);
    total = star(total, step);
  }
  return total;
}

EdgePropagator edge_transfer(const Segment4D& seg, const RotorGeometry& geom, const ParameterVector& theta_plan,
                             const NoiseConfig& noise) {
  std::vector<LinearizedSystem> systems = edge_systems(seg, geom, theta_plan, noise);
  try {
    return compose_transfer(systems);
  } catch (const NumericalError&) {
    return SequentialFallback{std::move(systems)};
  }
}

Covariance propagate(const Covariance& sigma0, const EdgePropagator& propagator) {
  if (const auto* s = std::get_if<CovarianceTransfer>(&propagator)) return apply_transfer(sigma0, *s);
  return propagate_sequential(sigma0, std::get<SequentialFallback>(propagator).systems);
}

double d_optimality(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols() || M.rows() < 1) throw std::invalid_argument("d_optimality needs a square matrix");
  // Jacobi scaling first: parameter variances span many decades and the
  // small eigenvalues of the raw matrix lose relative accuracy.
  const Eigen::VectorXd d = M.diagonal();
  if ((d.array() > 0.0).all()) {
    const Eigen::VectorXd s = d.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = s.asDiagonal() * M * s.asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() > 0.0) {
      double log_sum = d.array().log().sum();
      for (int i = 0; i < d.size(); ++i) log_sum += std::log(eig.eigenvalues()[i]);
      return std::exp(log_sum / static_cast<double>(d.size()));
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  double log_sum = 0.0;
  for (int i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -1e-10) throw NumericalError("d_optimality of an indefinite matrix");
    log_sum += std::log(std::max(lambda[i], 1e-300));
  }
  return std::exp(log_sum / static_cast<double>(lambda.size()));
}

double d_optimality_fast(const Eigen::MatrixXd& M) {
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) {
    const auto L = llt.matrixLLT().diagonal();
    double log_sum = 0.0;
    for (int i = 0; i < L.size(); ++i) {
      if (!(L[i] > 1e-150)) return d_optimality(M);
      log_sum += 2.0 * std::log(L[i]);
    }
    return std::exp(log_sum / static_cast<double>(L.size()));
  }
  return d_optimality(M);
}

Covariance default_prior(const ParameterVector& theta_guess, double kinematic_var, double relative_param_std) {
  Covariance sigma = Covariance::Zero();
  sigma.topLeftCorner<12, 12>() = Eigen::Matrix<double, 12, 12>::Identity() * kinematic_var;
  const Vec6 th = theta_guess.as_vector();
  for (int i = 0; i < 6; ++i) sigma(kParamOffset + i, kParamOffset + i) = std::pow(relative_param_std * th[i], 2);
  return sigma;
}

}  // namespace mavcal
