#pragma once

// Polynomial trajectory segments in position and yaw: minimum-derivative
// boundary-value solve, evaluation, root-based extrema and feasibility checks.

#include "mavcal/mav_model.hpp"

#include "json.hpp"

#include <array>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mavcal {

/// Polynomial in normalised time tau = t / duration, monomial basis.
class Polynomial1D {
 public:
  Polynomial1D() = default;
  Polynomial1D(Eigen::VectorXd coefficients, double duration);

  const Eigen::VectorXd& coefficients() const { return coeffs_; }
  double duration() const { return duration_; }
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }

  /// m-th derivative with respect to physical time, t in [0, duration].
  double eval(double t, int order = 0) const;
  /// m-th derivative with respect to tau.
  double eval_tau(double tau, int order = 0) const;

  /// Coefficients (in tau) of the m-th tau-derivative.
  Eigen::VectorXd derivative_coefficients(int order) const;

 private:
  Eigen::VectorXd coeffs_;
  double duration_ = 1.0;
};

/// Evaluates sum c_i x^i and its m-th derivative (Horner).
double polyval(const Eigen::VectorXd& coeffs, double x, int order = 0);

/// All real roots of the polynomial inside [lo, hi], ascending. Roots are
/// isolated recursively between the roots of the derivative and refined by
/// bisection. An identically zero polynomial yields no roots.
std::vector<double> real_roots(const Eigen::VectorXd& coeffs, double lo, double hi);

struct FlatState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  Vec3 jerk = Vec3::Zero();
  Vec3 snap = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
  double yaw_acceleration = 0.0;

  bool finite() const;
  /// Hover at a point: every derivative zero.
  static FlatState hover(const Vec3& position, double yaw = 0.0);
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

inline constexpr int kPositionDegree = 10;
inline constexpr int kYawDegree = 6;

struct Segment4D {
  std::array<Polynomial1D, 3> position;
  Polynomial1D yaw;

  double duration() const { return yaw.duration(); }
};

struct Limits {
  double thrust_min = 4.0;       // mass-normalised, m/s^2
  double thrust_max = 16.0;
  double omega_max = 4.0;        // rad/s
  double yaw_acc_max = 2.0;      // rad/s^2
  Vec3 box_min = Vec3(-1.0, -1.0, 0.0);
  Vec3 box_max = Vec3(1.0, 1.0, 2.0);
  double v_max = 3.0;            // m/s
  double segment_time_max = 3.0; // s

  void validate() const;
  bool operator==(const Limits&) const = default;
};

/// Minimum-derivative solve for one scalar polynomial with normalised time.
///   start:      values of derivatives 0..start.size()-1 at t = 0 (physical units)
///   end_value:  value at t = t_s
///   end_derivs: optional derivatives 1..end_derivs.size() at t = t_s
/// The degree is fixed by n_coeffs; derivatives at the end that are not
/// imposed are chosen to minimise the integral of the squared cost_order-th
/// derivative. Throws std::invalid_argument for t_s <= 0 or an inconsistent
/// constraint count, std::runtime_error when the system is singular.
Polynomial1D solve_min_derivative(const std::vector<double>& start, double end_value,
                                  const std::optional<std::vector<double>>& end_derivs, int n_coeffs,
                                  int cost_order, double t_s);

/// Minimum-snap position / minimum-angular-velocity yaw segment. When
/// end_derivatives is present its velocity..snap and yaw rate/acceleration
/// are imposed (its position/yaw fields are ignored).
Segment4D solve_segment(const FlatState& start, const Vec3& end_position, double end_yaw,
                        const std::optional<FlatState>& end_derivatives, double t_s);

/// Throws std::out_of_range when t is outside [0, duration].
FlatState evaluate(const Segment4D& seg, double t);

/// Integral over the segment of the squared order-th derivative (physical time).
double derivative_cost(const Polynomial1D& poly, int order);

/// Bounds on the order-th physical-time derivative over [lo, hi]. Exact up to
/// rounding: candidates are the endpoints and the real roots of the next
/// derivative.
std::pair<double, double> extrema_bounds(const Polynomial1D& poly, double lo, double hi, int order);

enum class Constraint { None, Position, Thrust, BodyRate, YawAcceleration };
std::string to_string(Constraint c);

struct Feasibility {
  bool feasible = true;
  Constraint violated = Constraint::None;
  double t_lo = 0.0;
  double t_hi = 0.0;

  static Feasibility ok() { return {}; }
  explicit operator bool() const { return feasible; }
};

/// Conservative check of thrust, body rate, yaw acceleration and box limits
/// over the whole segment. Drag is neglected.
Feasibility check_feasibility(const Segment4D& seg, const Limits& limits);

/// Uniform sample on [d / v_max, min(budget_left, t_s_max)]. Throws
/// std::domain_error when the interval is empty.
double sample_segment_time(double distance, double v_max, double budget_left, double t_s_max, std::mt19937_64& rng);

/// {t_s, x:[...], y:[...], z:[...], yaw:[...]} with coefficients in normalised time.
nlohmann::json segment_to_json(const Segment4D& seg);
Segment4D segment_from_json(const nlohmann::json& j);

}  // namespace mavcal
