#pragma once

// CSV and JSON exports. Writers check column counts before anything is
// written.

#include "mavcal/planner.hpp"
#include "mavcal/sim_estimator.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace mavcal {

/// t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz,sx,sy,sz,yaw,yawd,yawdd sampled at `rate`.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, double rate);

/// t,px,py,pz,vbx,vby,vbz,qw,qx,qy,qz,wx,wy,wz,n1..nk
void write_full_state_csv(std::ostream& os, const std::vector<NominalPoint>& points);

/// t,zpx,zpy,zpz,zqw,zqx,zqy,zqz,n1..nk
void write_measurements_csv(std::ostream& os, const MeasurementStream& stream);
MeasurementStream read_measurements_csv(std::istream& is, double rate);

/// t, then (estimate, sigma) per parameter, then dopt.
void write_estimation_csv(std::ostream& os, const EstimationRun& run);

struct CovarianceTrace {
  std::vector<double> t;
  std::vector<Vec6> sigma;
  std::vector<double> dopt;
};

/// Planner-model prediction of the parameter sigmas along a trajectory,
/// one row per filter step.
CovarianceTrace predicted_covariance_trace(const Trajectory& traj, const PlannerConfig& cfg);
/// t,sigma_cT,sigma_cD,sigma_cM,sigma_jx,sigma_jy,sigma_jz,dopt
void write_covariance_trace_csv(std::ostream& os, const CovarianceTrace& trace);

/// runtime,iteration,beliefs,alive_beliefs,vertices,incumbent
void write_checkpoints_csv(std::ostream& os, const std::vector<Checkpoint>& checkpoints);

/// Writes `content` to `path`, creating parent directories.
void write_file(const std::string& path, const std::string& content);

/// Shortest round-trip text form of a double.
std::string format_double(double v);

}  // namespace mavcal
