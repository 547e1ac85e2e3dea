#include "mavcal/flat_recovery.hpp"

#include <cmath>

namespace mavcal {

std::string to_string(Singularity s) {
  switch (s) {
    case Singularity::FreeFall: return "free_fall";
    case Singularity::ThrustAlongHeading: return "thrust_along_heading";
    case Singularity::NegativeRotorSpeed: return "negative_rotor_speed";
    case Singularity::RankDeficient: return "rank_deficient";
  }
  return "unknown";
}

AllocationMatrix allocation_matrix(const RotorGeometry& geom, const ParameterVector& theta) {
  const int k = geom.rotor_count();
  AllocationMatrix m;
  m.A.resize(4, k);
  for (int i = 0; i < k; ++i) {
    // r x (c_T z) = c_T (y, -x, 0); yaw reaction -eps c_M c_T; thrust c_T.
    const Vec3& r = geom.positions[i];
    m.A(0, i) = theta.c_T * r.y();
    m.A(1, i) = -theta.c_T * r.x();
    m.A(2, i) = -geom.spin[i] * theta.c_T * theta.c_M;
    m.A(3, i) = theta.c_T;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m.A);
  const auto& sv = svd.singularValues();
  if (sv.size() < 4 || sv[3] <= 1e-12 * sv[0]) {
    throw SingularityError(Singularity::RankDeficient, "allocation matrix is rank deficient");
  }
  const Eigen::Matrix4d gram = m.A * m.A.transpose();
  m.A_pinv = m.A.transpose() * gram.inverse();
  return m;
}

const AllocationMatrix& cached_allocation(const RotorGeometry& geom, const ParameterVector& theta) {
  struct Entry {
    bool valid = false;
    RotorGeometry geom;
    ParameterVector theta;
    AllocationMatrix alloc;
  };
  thread_local Entry entry;
  if (!entry.valid || !(entry.theta == theta) || !(entry.geom == geom)) {
    entry.alloc = allocation_matrix(geom, theta);
    entry.geom = geom;
    entry.theta = theta;
    entry.valid = true;
  }
  return entry.alloc;
}

namespace {

struct Frame {
  Vec3 x_B, y_B, z_B;
  Vec3 heading;       // x_C
  Vec3 cross;         // z_B x x_C (unnormalised)
  double thrust = 0;  // |t|
};

Frame build_frame(const FlatState& flat) {
  Frame f;
  const Vec3 t = flat.acceleration + gravity_vector();
  f.thrust = t.norm();
  if (!(f.thrust >= kMinThrustNorm)) throw SingularityError(Singularity::FreeFall, "thrust vector vanishes");
  f.z_B = t / f.thrust;
  f.heading = Vec3(std::cos(flat.yaw), std::sin(flat.yaw), 0.0);
  f.cross = f.z_B.cross(f.heading);
  const double n = f.cross.norm();
  if (!(n >= kMinHeadingCross)) {
    throw SingularityError(Singularity::ThrustAlongHeading, "thrust direction parallel to heading");
  }
  f.y_B = f.cross / n;
  f.x_B = f.y_B.cross(f.z_B);
  return f;
}

}  // namespace

Mat3 attitude_from_flat(const FlatState& flat) {
  const Frame f = build_frame(flat);
  Mat3 C;
  C.col(0) = f.x_B;
  C.col(1) = f.y_B;
  C.col(2) = f.z_B;
  return C;
}

InputVector rotor_speeds(const Vec3& omega_B, const Vec3& alpha_B, double thrust_accel_norm,
                         const RotorGeometry& geom, const ParameterVector& theta) {
  const AllocationMatrix& alloc = cached_allocation(geom, theta);
  const Mat3 J = theta.inertia();
  Eigen::Vector4d wrench;
  wrench.head<3>() = J * alpha_B + omega_B.cross(J * omega_B);
  wrench[3] = geom.mass * thrust_accel_norm;
  Eigen::VectorXd n_sq = alloc.A_pinv * wrench;
  for (int i = 0; i < n_sq.size(); ++i) {
    if (n_sq[i] < -kRotorSpeedTolerance) {
      throw SingularityError(Singularity::NegativeRotorSpeed, "allocation requires a negative squared rotor speed");
    }
    n_sq[i] = std::sqrt(std::max(0.0, n_sq[i]));
  }
  return n_sq;
}

NominalPoint flat_to_full(const FlatState& flat, const RotorGeometry& geom, const ParameterVector& theta,
                          double timestamp) {
  const Frame f = build_frame(flat);
  Mat3 C;
  C.col(0) = f.x_B;
  C.col(1) = f.y_B;
  C.col(2) = f.z_B;

  const Vec3& z = f.z_B;
  const Vec3& j = flat.jerk;
  const Vec3& s = flat.snap;
  const double T = f.thrust;

  // First derivatives of thrust magnitude and direction.
  const double T_dot = z.dot(j);
  const Vec3 h_omega = (j - T_dot * z) / T;  // = z_dot
  const double sy = std::sin(flat.yaw), cy = std::cos(flat.yaw);
  const Vec3 heading_dot = flat.yaw_rate * Vec3(-sy, cy, 0.0);
  const Vec3 heading_ddot = flat.yaw_acceleration * Vec3(-sy, cy, 0.0) - flat.yaw_rate * flat.yaw_rate * f.heading;

  // Yaw rate about z_B from the derivative of y_B = (z x x_C) / |z x x_C|.
  const double n_c = f.cross.norm();
  const Vec3 c_dot = h_omega.cross(f.heading) + z.cross(heading_dot);
  Vec3 omega;
  omega.x() = -h_omega.dot(f.y_B);
  omega.y() = h_omega.dot(f.x_B);
  omega.z() = -f.x_B.dot(c_dot) / n_c;
  const Vec3 omega_W = C * omega;

  // Second derivatives.
  const double T_ddot = h_omega.dot(j) + z.dot(s);
  const Vec3 z_ddot = (s - T_ddot * z - 2.0 * T_dot * h_omega) / T;
  const Vec3 wwz = omega_W.cross(omega_W.cross(z));
  const Vec3 h_alpha = z_ddot - wwz;  // = alpha_W x z
  const Vec3 c_ddot = z_ddot.cross(f.heading) + 2.0 * h_omega.cross(heading_dot) + z.cross(heading_ddot);
  const Vec3 x_dot = omega_W.cross(f.x_B);
  const double n_c_dot = f.y_B.dot(c_dot);
  Vec3 alpha;
  alpha.x() = -h_alpha.dot(f.y_B);
  alpha.y() = h_alpha.dot(f.x_B);
  alpha.z() = -(x_dot.dot(c_dot) + f.x_B.dot(c_ddot)) / n_c + f.x_B.dot(c_dot) * n_c_dot / (n_c * n_c);

  NominalPoint p;
  p.timestamp = timestamp;
  p.state.p_W = flat.position;
  p.state.q = canonical(Quat(C));
  p.state.v_B = C.transpose() * flat.velocity;
  p.state.omega_B = omega;
  p.state.theta = theta;
  p.angular_acceleration = alpha;
  p.input = rotor_speeds(omega, alpha, T, geom, theta);
  return p;
}

}  // namespace mavcal
