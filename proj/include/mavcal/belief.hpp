#pragma once

// Error-state linearisation of the multirotor model, the EKF covariance
// recursion, one-step transfer functions composed with the Redheffer star
// product, and the D-optimality criterion.
//
// Error state layout (18): dp(0..2) dv(3..5) dPsi(6..8) domega(9..11) dTheta(12..17).

#include "mavcal/flat_recovery.hpp"
#include "mavcal/mav_model.hpp"
#include "mavcal/polynomial.hpp"

#include <stdexcept>
#include <variant>
#include <vector>

namespace mavcal {

inline constexpr int kErrorDim = 18;
inline constexpr int kParamOffset = 12;
inline constexpr double kMaxCondition = 1e12;

using Matrix18 = Eigen::Matrix<double, kErrorDim, kErrorDim>;
using Vector18 = Eigen::Matrix<double, kErrorDim, 1>;
using Covariance = Matrix18;
using MeasurementMatrix = Eigen::Matrix<double, Eigen::Dynamic, kErrorDim>;

/// Raised for ill-conditioned inversions and indefinite covariances.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LinearizedSystem {
  Matrix18 F;
  Matrix18 Q;
  MeasurementMatrix H;
  Eigen::MatrixXd R;
  double dt = 0.0;
};

/// Continuous-time Jacobian of the error dynamics at a nominal point.
Matrix18 error_jacobian(const NominalPoint& point, const RotorGeometry& geom);

/// Maps force/moment process noise into the error-state rates (18 x 6).
Eigen::Matrix<double, kErrorDim, 6> noise_jacobian(const ParameterVector& theta, const RotorGeometry& geom);

/// Position and attitude-error selector (6 x 18) and its noise.
MeasurementMatrix pose_measurement_matrix();
Eigen::MatrixXd pose_measurement_noise(const NoiseConfig& noise);

/// F = I + A dt, Q = G Sigma_w G^T dt, H = pose selector, R = diag(R_p, R_q).
LinearizedSystem linearize(const NominalPoint& point, const RotorGeometry& geom, const NoiseConfig& noise, double dt);

/// Predict with (F, Q), update with (H, R); result symmetrised. Throws
/// NumericalError when the innovation covariance has condition > 1e12.
Covariance ekf_step(const Covariance& sigma, const LinearizedSystem& sys);

/// 2n x 2n block transfer [[A, B], [C, D]].
struct CovarianceTransfer {
  Matrix18 A = Matrix18::Identity();
  Matrix18 B = Matrix18::Zero();
  Matrix18 C = Matrix18::Zero();
  Matrix18 D = Matrix18::Identity();

  static CovarianceTransfer identity() { return {}; }
  /// [[F, Q], [0, F^T]]
  static CovarianceTransfer motion(const Matrix18& F, const Matrix18& Q);
  /// [[I, 0], [-H^T R^-1 H, I]]
  static CovarianceTransfer measurement(const MeasurementMatrix& H, const Eigen::MatrixXd& R);
};

/// Redheffer star product. Throws NumericalError when I - B1 Y2 has
/// condition > 1e12.
CovarianceTransfer star(const CovarianceTransfer& s1, const CovarianceTransfer& s2);

/// Upper-right block of [[I, Sigma0], [0, I]] * S, symmetrised.
Covariance apply_transfer(const Covariance& sigma0, const CovarianceTransfer& s);

/// Sample schedule used for an edge: N = ceil(t_s * rate) steps of length
/// t_s / N. Step k (1..N) predicts from the nominal point at t_{k-1} and
/// updates with the measurement at t_k.
int edge_step_count(double t_s, double rate);

/// Linearised systems for every step of the edge schedule. Throws
/// SingularityError when any sample point cannot be recovered.
std::vector<LinearizedSystem> edge_systems(const Segment4D& seg, const RotorGeometry& geom,
                                           const ParameterVector& theta_plan, const NoiseConfig& noise);

/// Sequential EKF covariance propagation over a list of systems.
Covariance propagate_sequential(const Covariance& sigma0, const std::vector<LinearizedSystem>& systems);

/// Edge payload: a composed transfer, or the per-step systems when an
/// interconnection was too ill-conditioned to compose.
struct SequentialFallback {
  std::vector<LinearizedSystem> systems;
};
using EdgePropagator = std::variant<CovarianceTransfer, SequentialFallback>;

/// S_0:N = S_1 * ... * S_N with S_k = S_k^C * S_k^M.
CovarianceTransfer compose_transfer(const std::vector<LinearizedSystem>& systems);
EdgePropagator edge_transfer(const Segment4D& seg, const RotorGeometry& geom, const ParameterVector& theta_plan,
                             const NoiseConfig& noise);

/// Applies either propagator form; result symmetrised.
Covariance propagate(const Covariance& sigma0, const EdgePropagator& propagator);

/// Geometric mean of the eigenvalues computed in log space. Throws
/// NumericalError for eigenvalues below -1e-10.
double d_optimality(const Eigen::MatrixXd& M);
/// Same quantity via a Cholesky log-determinant, falling back to the
/// eigenvalue route when the factorisation fails.
double d_optimality_fast(const Eigen::MatrixXd& M);

inline Mat6 parameter_block(const Covariance& sigma) { return sigma.block<6, 6>(kParamOffset, kParamOffset); }

/// Default prior: 1e-6 on the kinematic states, (0.5 theta)^2 on parameters.
Covariance default_prior(const ParameterVector& theta_guess, double kinematic_var = 1e-6, double relative_param_std = 0.5);

Covariance symmetrized(const Covariance& m);

}  // namespace mavcal
