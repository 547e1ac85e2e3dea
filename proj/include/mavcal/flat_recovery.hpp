#pragma once

// Differential-flatness map from sampled flat states to the nominal full
// state, angular acceleration and rotor speeds used as linearisation points.

#include "mavcal/mav_model.hpp"
#include "mavcal/polynomial.hpp"

#include <stdexcept>
#include <string>

namespace mavcal {

enum class Singularity { FreeFall, ThrustAlongHeading, NegativeRotorSpeed, RankDeficient };
std::string to_string(Singularity s);

class SingularityError : public std::runtime_error {
 public:
  SingularityError(Singularity kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Singularity kind() const { return kind_; }

 private:
  Singularity kind_;
};

inline constexpr double kMinThrustNorm = 0.1;      // m/s^2
inline constexpr double kMinHeadingCross = 1e-3;   // |z_B x x_C|
inline constexpr double kRotorSpeedTolerance = 1e-9;

struct AllocationMatrix {
  Eigen::Matrix<double, 4, Eigen::Dynamic> A;       // n^2 -> (tau_x, tau_y, tau_z, T)
  Eigen::Matrix<double, Eigen::Dynamic, 4> A_pinv;
};

/// Throws SingularityError(RankDeficient) when A has rank < 4.
AllocationMatrix allocation_matrix(const RotorGeometry& geom, const ParameterVector& theta);

/// Same as allocation_matrix, memoised on the last (geometry, parameter) pair
/// of the calling thread.
const AllocationMatrix& cached_allocation(const RotorGeometry& geom, const ParameterVector& theta);

struct NominalPoint {
  FullState state;
  InputVector input;
  Vec3 angular_acceleration = Vec3::Zero();
  double timestamp = 0.0;
};

/// Attitude matrix [x_B y_B z_B] for a thrust direction and yaw.
Mat3 attitude_from_flat(const FlatState& flat);

/// Squared rotor speeds from the required torque and mass-normalised thrust.
/// Small negative values inside the tolerance band are clamped to zero,
/// larger ones raise SingularityError(NegativeRotorSpeed).
InputVector rotor_speeds(const Vec3& omega_B, const Vec3& alpha_B, double thrust_accel_norm,
                         const RotorGeometry& geom, const ParameterVector& theta);

NominalPoint flat_to_full(const FlatState& flat, const RotorGeometry& geom, const ParameterVector& theta,
                          double timestamp = 0.0);

}  // namespace mavcal
