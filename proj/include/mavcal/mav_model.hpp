#pragma once

// Multirotor rigid-body model: state, parameters, rotor wrench, dynamics,
// pose measurements and the small-angle attitude error used by the filters.

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace mavcal {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Quat = Eigen::Quaterniond;

inline constexpr double kGravity = 9.81;

/// World-frame gravity vector G as it enters T = |a + G|.
inline Vec3 gravity_vector() { return Vec3(0.0, 0.0, kGravity); }

/// Raised when an argument is outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Unknown physical parameters: thrust, drag and moment coefficients plus
/// the principal inertias.
struct ParameterVector {
  double c_T = 8.5e-6;  // N s^2
  double c_D = 0.01;
  double c_M = 0.016;   // yaw moment per unit thrust (m)
  double j_x = 0.035;   // kg m^2
  double j_y = 0.046;
  double j_z = 0.098;

  static constexpr int kSize = 6;

  Vec6 as_vector() const { return (Vec6() << c_T, c_D, c_M, j_x, j_y, j_z).finished(); }
  static ParameterVector from_vector(const Vec6& v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

  Mat3 inertia() const { return Vec3(j_x, j_y, j_z).asDiagonal(); }

  bool valid() const;
  /// Throws std::invalid_argument if any entry is non-positive or non-finite.
  void validate() const;

  bool operator==(const ParameterVector&) const = default;
};

/// Short names in canonical order, used for CSV headers and reports.
inline constexpr const char* kParameterNames[6] = {"cT", "cD", "cM", "jx", "jy", "jz"};

struct FullState {
  Vec3 p_W = Vec3::Zero();
  Vec3 v_B = Vec3::Zero();
  Quat q = Quat::Identity();  // world <- base
  Vec3 omega_B = Vec3::Zero();
  ParameterVector theta;
};

struct RotorGeometry {
  std::vector<Vec3> positions;  // r_B,i relative to the CoG
  std::vector<int> spin;        // epsilon_i, +1 or -1
  double mass = 1.5;
  double arm_length = 0.215;

  int rotor_count() const { return static_cast<int>(positions.size()); }
  /// k >= 4, sizes consistent, spins are +-1, mass and arm positive.
  void validate() const;
  /// True when the spin directions cancel.
  bool balanced() const;

  /// Hexacopter with rotors at 30, 90, ..., 330 degrees and alternating spin,
  /// ordered to match the standard hexacopter allocation layout.
  static RotorGeometry hexacopter(double arm_length = 0.215, double mass = 1.5);

  bool operator==(const RotorGeometry&) const = default;
};

struct NoiseConfig {
  Vec3 force_var = Vec3::Constant(1e-2);    // Q_F diagonal, N^2
  Vec3 moment_var = Vec3::Constant(1e-4);   // Q_M diagonal, N^2 m^2
  Vec3 position_var = Vec3::Constant(2.5e-7);   // R_p diagonal, m^2 (0.5 mm)
  Vec3 attitude_var = Vec3::Constant(3.0462e-6);  // R_q diagonal, rad^2 (0.1 deg)
  double rate = 100.0;  // Hz

  void validate() const;
  bool operator==(const NoiseConfig&) const = default;
};

/// Rotor speeds in rad/s.
using InputVector = Eigen::VectorXd;

struct RotorWrench {
  std::vector<Vec3> forces;
  std::vector<Vec3> moments;
};

/// Deterministic per-rotor forces and moments in the base frame.
RotorWrench rotor_wrench(const FullState& state, const InputVector& input, const RotorGeometry& geom);

/// Sum of forces and of moments about the CoG (rotor moments plus r x F).
struct BodyWrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};
BodyWrench body_wrench(const FullState& state, const InputVector& input, const RotorGeometry& geom);

struct StateDerivative {
  Vec3 p_dot = Vec3::Zero();
  Vec3 v_dot = Vec3::Zero();
  Vec4 q_dot = Vec4::Zero();  // (w, x, y, z)
  Vec3 omega_dot = Vec3::Zero();
  Vec6 theta_dot = Vec6::Zero();
};

/// Continuous-time dynamics. process_noise = (force perturbation, moment perturbation).
StateDerivative dynamics_derivative(const FullState& state, const InputVector& input,
                                    const RotorGeometry& geom, const Vec6& process_noise = Vec6::Zero());

/// One classical Runge-Kutta step with the input interpolated linearly from
/// input_begin to input_end; the quaternion is renormalised afterwards.
FullState rk4_step(const FullState& state, const InputVector& input_begin, const InputVector& input_end,
                   const RotorGeometry& geom, double dt, const Vec6& process_noise = Vec6::Zero());

struct PoseMeasurement {
  Vec3 position = Vec3::Zero();
  Quat attitude = Quat::Identity();
};

/// z_p = p + noise_p, z_q = q (x) [1, phi/2] renormalised.
PoseMeasurement measure(const FullState& state, const Vec3& noise_p, const Vec3& noise_phi);

Mat3 skew(const Vec3& v);

/// Small-angle error dPsi with q = q_nominal (x) [1, dPsi/2] (up to normalisation).
/// Throws DomainError when the relative rotation has a non-positive scalar part.
Vec3 quat_error(const Quat& q_nominal, const Quat& q);

/// Inverse of quat_error: q_nominal (x) normalise([1, dPsi/2]).
Quat quat_compose(const Quat& q_nominal, const Vec3& delta_psi);

/// Quaternion with the same rotation and non-negative scalar part.
Quat canonical(const Quat& q);

/// Kinetic plus potential energy of the rigid body (used for model checks).
double mechanical_energy(const FullState& state, const RotorGeometry& geom);

}  // namespace mavcal
