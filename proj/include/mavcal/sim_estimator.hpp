#pragma once

// Offline validation: measurement synthesis along a planned trajectory, the
// full error-state EKF that identifies the parameters, and convergence
// metrics.

#include "mavcal/belief.hpp"
#include "mavcal/planner.hpp"

#include <array>
#include <optional>
#include <random>
#include <vector>

namespace mavcal {

struct MeasurementRecord {
  double t = 0.0;
  Vec3 z_p = Vec3::Zero();
  Quat z_q = Quat::Identity();
  InputVector input;  // rotor speeds applied at t
};

struct MeasurementStream {
  double rate = 100.0;
  std::vector<MeasurementRecord> records;
  /// Nominal points the stream was synthesised from; empty when loaded from disk.
  std::vector<NominalPoint> nominal;

  double dt() const { return 1.0 / rate; }
  /// Strictly increasing timestamps with constant spacing 1/rate (1e-9),
  /// unit quaternions and a consistent rotor count. Throws std::invalid_argument.
  void validate() const;
};

enum class SynthesisMode {
  PerfectTracking,  // measurements around the recovered nominal states
  ClosedModel,      // open-loop integration of the true model from the recovered inputs
};

/// Samples the trajectory at t_k = k / rate, recovers nominal states and
/// inputs under theta_true, and adds pose noise with the variances in
/// `noise` (zero variances give exact measurements). Throws SingularityError
/// when recovery fails.
MeasurementStream synthesize(const Trajectory& traj, const RotorGeometry& geom, const ParameterVector& theta_true,
                             const NoiseConfig& noise, std::mt19937_64& rng,
                             SynthesisMode mode = SynthesisMode::PerfectTracking);

/// Hover at a fixed pose for the given duration.
MeasurementStream synthesize_hover(const Vec3& position, double yaw, double duration, const RotorGeometry& geom,
                                   const ParameterVector& theta_true, const NoiseConfig& noise,
                                   std::mt19937_64& rng);

struct EstimatorOptions {
  bool state_update = true;           // inject the correction into the mean
  bool nominal_linearization = false; // linearise at the stream's nominal points
  double divergence_factor = 1e6;     // any sigma above this multiple of its initial value
};

struct EstimationRun {
  std::vector<double> t;
  std::vector<Vec6> theta;   // estimates
  std::vector<Vec6> sigma;   // 1-sigma from the Sigma_Theta diagonal
  std::vector<double> dopt;  // d_opt(Sigma_Theta)
  Covariance final_sigma = Covariance::Zero();
  Mat6 final_sigma_theta = Mat6::Zero();
  FullState final_state;
  bool diverged = false;
  int diverged_at = -1;  // record index

  std::size_t size() const { return t.size(); }
};

/// Error-state EKF over the stream. Record k >= 1 predicts from k-1 with the
/// recorded inputs and the current parameter estimate and corrects with the
/// pose measured at k. The filter is initialised at the first record's pose
/// with zero velocity and rate unless the stream carries nominal points.
EstimationRun estimate(const MeasurementStream& stream, const RotorGeometry& geom, const ParameterVector& theta_guess,
                       const Covariance& sigma0, const NoiseConfig& noise, const EstimatorOptions& options = {});

/// Per parameter, the earliest time after which the relative error stays
/// below threshold until the end of the history; nullopt if never.
std::array<std::optional<double>, 6> convergence_time(const EstimationRun& run, const ParameterVector& theta_true,
                                                      double threshold = 0.05);

/// Same scan over a raw estimate history.
std::optional<double> convergence_time(const std::vector<double>& t, const std::vector<double>& estimate,
                                       double truth, double threshold);

/// RK4 with linearly interpolated inputs; returns inputs.size() states
/// (x0 first). noise, when given, holds one additive force/moment draw per
/// step. Throws NumericalError naming the step on a non-finite state.
std::vector<FullState> integrate_dynamics(const FullState& x0, const std::vector<InputVector>& inputs, double dt,
                                          const RotorGeometry& geom, const std::vector<Vec6>* noise = nullptr);

}  // namespace mavcal
