#include "mavcal/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mavcal {

namespace {

// n! / (n - m)!
double falling_factorial(int n, int m) {
  double r = 1.0;
  for (int k = 0; k < m; ++k) r *= static_cast<double>(n - k);
  return r;
}

}  // namespace

double polyval(const Eigen::VectorXd& coeffs, double x, int order) {
  const int n = static_cast<int>(coeffs.size());
  if (order >= n) return 0.0;
  double acc = 0.0;
  for (int i = n - 1; i >= order; --i) acc = acc * x + coeffs[i] * falling_factorial(i, order);
  return acc;
}

Polynomial1D::Polynomial1D(Eigen::VectorXd coefficients, double duration)
    : coeffs_(std::move(coefficients)), duration_(duration) {
  if (!(duration_ > 0.0) || !std::isfinite(duration_)) throw std::invalid_argument("polynomial duration must be positive");
}

double Polynomial1D::eval_tau(double tau, int order) const { return polyval(coeffs_, tau, order); }

double Polynomial1D::eval(double t, int order) const {
  return eval_tau(t / duration_, order) / std::pow(duration_, order);
}

Eigen::VectorXd Polynomial1D::derivative_coefficients(int order) const {
  const int n = static_cast<int>(coeffs_.size());
  if (order >= n) return Eigen::VectorXd::Zero(1);
  Eigen::VectorXd d(n - order);
  for (int i = order; i < n; ++i) d[i - order] = coeffs_[i] * falling_factorial(i, order);
  return d;
}

namespace {

Eigen::VectorXd trim(const Eigen::VectorXd& c) {
  int n = static_cast<int>(c.size());
  while (n > 0 && c[n - 1] == 0.0) --n;
  return c.head(n);
}

double bisect_root(const Eigen::VectorXd& c, double a, double b, double fa) {
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    const double fm = polyval(c, m);
    if (fm == 0.0) return m;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

std::vector<double> real_roots(const Eigen::VectorXd& coeffs, double lo, double hi) {
  const Eigen::VectorXd c = trim(coeffs);
  std::vector<double> roots;
  if (c.size() <= 1 || lo > hi) return roots;
  if (c.size() == 2) {
    const double r = -c[0] / c[1];
    if (r >= lo && r <= hi) roots.push_back(r);
    return roots;
  }
  Eigen::VectorXd d(c.size() - 1);
  for (int i = 1; i < c.size(); ++i) d[i - 1] = c[i] * i;

  std::vector<double> breaks{lo};
  for (double r : real_roots(d, lo, hi)) {
    if (r > breaks.back()) breaks.push_back(r);
  }
  if (hi > breaks.back()) breaks.push_back(hi);

  // Between consecutive critical points the polynomial is monotone.
  double fa = polyval(c, breaks[0]);
  if (fa == 0.0) roots.push_back(breaks[0]);
  for (std::size_t k = 1; k < breaks.size(); ++k) {
    const double a = breaks[k - 1];
    const double b = breaks[k];
    const double fb = polyval(c, b);
    if (fb == 0.0) {
      roots.push_back(b);
    } else if (fa != 0.0 && (fa < 0.0) != (fb < 0.0)) {
      roots.push_back(bisect_root(c, a, b, fa));
    }
    fa = fb;
  }
  return roots;
}

bool FlatState::finite() const {
  return position.allFinite() && velocity.allFinite() && acceleration.allFinite() && jerk.allFinite() &&
         snap.allFinite() && std::isfinite(yaw) && std::isfinite(yaw_rate) && std::isfinite(yaw_acceleration);
}

FlatState FlatState::hover(const Vec3& position, double yaw) {
  FlatState s;
  s.position = position;
  s.yaw = yaw;
  return s;
}

double wrap_angle(double angle) {
  double a = std::remainder(angle, 2.0 * std::numbers::pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

void Limits::validate() const {
  if (!(thrust_min >= 0.0 && thrust_min < kGravity && kGravity < thrust_max)) {
    throw std::invalid_argument("limits require 0 <= thrust_min < g < thrust_max");
  }
  if (!(omega_max > 0.0)) throw std::invalid_argument("limits.omega_max must be positive");
  if (!(yaw_acc_max > 0.0)) throw std::invalid_argument("limits.yaw_acc_max must be positive");
  if (!((box_max - box_min).array() >= 0.0).all() || !((box_max - box_min).array() > 0.0).any()) {
    throw std::invalid_argument("limits bounding box is degenerate");
  }
  if (!(v_max > 0.0)) throw std::invalid_argument("limits.v_max must be positive");
  if (!(segment_time_max > 0.0)) throw std::invalid_argument("limits.segment_time_max must be positive");
}

Polynomial1D solve_min_derivative(const std::vector<double>& start, double end_value,
                                  const std::optional<std::vector<double>>& end_derivs, int n_coeffs,
                                  int cost_order, double t_s) {
  if (!(t_s > 0.0) || !std::isfinite(t_s)) throw std::invalid_argument("segment time must be positive");
  const int n = n_coeffs;
  const int n_start = static_cast<int>(start.size());
  const int n_end_rows = n - n_start;
  const int n_end_fixed = 1 + (end_derivs ? static_cast<int>(end_derivs->size()) : 0);
  if (n_start < 1 || n_end_rows < n_end_fixed) throw std::invalid_argument("inconsistent boundary constraint count");

  // Boundary derivative map d = A a, rows ordered [start 0..n_start-1, end 0..n_end_rows-1].
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int m = 0; m < n_start; ++m) A(m, m) = falling_factorial(m, m);
  for (int m = 0; m < n_end_rows; ++m) {
    for (int i = m; i < n; ++i) A(n_start + m, i) = falling_factorial(i, m);
  }

  // Cost Hessian in tau: integral_0^1 (d^r/dtau^r p)^2.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (int i = cost_order; i < n; ++i) {
    for (int j = cost_order; j < n; ++j) {
      Q(i, j) = falling_factorial(i, cost_order) * falling_factorial(j, cost_order) / (i + j - 2 * cost_order + 1);
    }
  }

  const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw std::runtime_error("singular boundary constraint system");
  const Eigen::MatrixXd A_inv = lu.inverse();
  const Eigen::MatrixXd R = A_inv.transpose() * Q * A_inv;

  // Fixed entries first, free entries (unconstrained end derivatives) last.
  std::vector<int> fixed, free;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (int m = 0; m < n_start; ++m) {
    d[m] = start[m] * std::pow(t_s, m);
    fixed.push_back(m);
  }
  d[n_start] = end_value;
  fixed.push_back(n_start);
  for (int m = 1; m < n_end_rows; ++m) {
    if (end_derivs && m <= static_cast<int>(end_derivs->size())) {
      d[n_start + m] = (*end_derivs)[m - 1] * std::pow(t_s, m);
      fixed.push_back(n_start + m);
    } else {
      free.push_back(n_start + m);
    }
  }

  if (!free.empty()) {
    const int nf = static_cast<int>(free.size());
    Eigen::MatrixXd R_pp(nf, nf);
    Eigen::MatrixXd R_pf(nf, fixed.size());
    Eigen::VectorXd d_f(fixed.size());
    for (int a = 0; a < nf; ++a) {
      for (int b = 0; b < nf; ++b) R_pp(a, b) = R(free[a], free[b]);
      for (std::size_t b = 0; b < fixed.size(); ++b) R_pf(a, b) = R(free[a], fixed[b]);
    }
    for (std::size_t b = 0; b < fixed.size(); ++b) d_f[b] = d[fixed[b]];
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(R_pp);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw std::runtime_error("free-derivative cost is not positive definite");
    const Eigen::VectorXd d_p = ldlt.solve(-R_pf * d_f);
    for (int a = 0; a < nf; ++a) d[free[a]] = d_p[a];
  }

  const Eigen::VectorXd coeffs = lu.solve(d);
  if (!coeffs.allFinite()) throw std::runtime_error("non-finite polynomial coefficients");
  return Polynomial1D(coeffs, t_s);
}

Segment4D solve_segment(const FlatState& start, const Vec3& end_position, double end_yaw,
                        const std::optional<FlatState>& end_derivatives, double t_s) {
  Segment4D seg;
  for (int axis = 0; axis < 3; ++axis) {
    const std::vector<double> s{start.position[axis], start.velocity[axis], start.acceleration[axis],
                                start.jerk[axis], start.snap[axis]};
    std::optional<std::vector<double>> e;
    if (end_derivatives) {
      e = std::vector<double>{end_derivatives->velocity[axis], end_derivatives->acceleration[axis],
                              end_derivatives->jerk[axis], end_derivatives->snap[axis]};
    }
    seg.position[axis] = solve_min_derivative(s, end_position[axis], e, kPositionDegree + 1, 4, t_s);
  }
  const std::vector<double> s{start.yaw, start.yaw_rate, start.yaw_acceleration};
  std::optional<std::vector<double>> e;
  if (end_derivatives) e = std::vector<double>{end_derivatives->yaw_rate, end_derivatives->yaw_acceleration};
  seg.yaw = solve_min_derivative(s, end_yaw, e, kYawDegree + 1, 1, t_s);
  return seg;
}

FlatState evaluate(const Segment4D& seg, double t) {
  const double T = seg.duration();
  const double tol = 1e-12 * std::max(1.0, T);
  if (t < -tol || t > T + tol || !std::isfinite(t)) throw std::out_of_range("evaluation time outside segment");
  t = std::clamp(t, 0.0, T);
  FlatState f;
  for (int axis = 0; axis < 3; ++axis) {
    const auto& p = seg.position[axis];
    f.position[axis] = p.eval(t, 0);
    f.velocity[axis] = p.eval(t, 1);
    f.acceleration[axis] = p.eval(t, 2);
    f.jerk[axis] = p.eval(t, 3);
    f.snap[axis] = p.eval(t, 4);
  }
  f.yaw = seg.yaw.eval(t, 0);
  f.yaw_rate = seg.yaw.eval(t, 1);
  f.yaw_acceleration = seg.yaw.eval(t, 2);
  return f;
}

double derivative_cost(const Polynomial1D& poly, int order) {
  const Eigen::VectorXd d = poly.derivative_coefficients(order);
  // integral_0^1 (sum d_i tau^i)^2 dtau, then rescale to physical time.
  double acc = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    for (int j = 0; j < d.size(); ++j) acc += d[i] * d[j] / (i + j + 1);
  }
  return acc * std::pow(poly.duration(), 1 - 2 * order);
}

namespace {

struct Extrema {
  double min_value, max_value;
  double t_min, t_max;
};

Extrema extrema(const Polynomial1D& poly, double lo, double hi, int order) {
  const double T = poly.duration();
  if (order > poly.degree()) return {0.0, 0.0, lo, lo};
  const Eigen::VectorXd d = poly.derivative_coefficients(order);
  const double scale = 1.0 / std::pow(T, order);
  const double tau_lo = lo / T;
  const double tau_hi = hi / T;

  Extrema e{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), lo, lo};
  auto consider = [&](double tau) {
    const double v = polyval(d, tau) * scale;
    if (v < e.min_value) {
      e.min_value = v;
      e.t_min = tau * T;
    }
    if (v > e.max_value) {
      e.max_value = v;
      e.t_max = tau * T;
    }
  };
  consider(tau_lo);
  consider(tau_hi);
  if (d.size() > 1) {
    Eigen::VectorXd dd(d.size() - 1);
    for (int i = 1; i < d.size(); ++i) dd[i - 1] = d[i] * i;
    for (double r : real_roots(dd, tau_lo, tau_hi)) consider(r);
  }
  return e;
}

double max_abs(double lo, double hi) { return std::max(std::abs(lo), std::abs(hi)); }
double min_abs(double lo, double hi) { return (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi)); }

// Thrust and body rate of the flat-state map at one instant.
struct PointLoad {
  double thrust;
  double omega;
};

PointLoad point_load(const Segment4D& seg, double t) {
  Vec3 a, j;
  for (int axis = 0; axis < 3; ++axis) {
    a[axis] = seg.position[axis].eval(t, 2);
    j[axis] = seg.position[axis].eval(t, 3);
  }
  const Vec3 thrust = a + gravity_vector();
  const double T = thrust.norm();
  if (T <= 0.0) return {0.0, std::numeric_limits<double>::infinity()};
  const Vec3 z_B = thrust / T;
  const Vec3 h = (j - z_B.dot(j) * z_B) / T;
  const double w3 = seg.yaw.eval(t, 1) * z_B.z();
  return {T, std::sqrt(h.squaredNorm() + w3 * w3)};
}

struct DynamicCheck {
  const Segment4D& seg;
  const Limits& limits;
  double min_width;

  // Conservative verdict for [lo, hi]: bounded from per-axis extrema; on
  // failure the interval is either refuted by an evaluated point or split.
  Feasibility run(double lo, double hi) const {
    Vec3 a_lo, a_hi, j_abs;
    for (int axis = 0; axis < 3; ++axis) {
      const auto acc = extrema(seg.position[axis], lo, hi, 2);
      const auto jerk = extrema(seg.position[axis], lo, hi, 3);
      a_lo[axis] = acc.min_value + gravity_vector()[axis];
      a_hi[axis] = acc.max_value + gravity_vector()[axis];
      j_abs[axis] = max_abs(jerk.min_value, jerk.max_value);
    }
    const auto yaw_rate = extrema(seg.yaw, lo, hi, 1);
    double t_max_sq = 0.0, t_min_sq = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
      t_max_sq += std::pow(max_abs(a_lo[axis], a_hi[axis]), 2);
      t_min_sq += std::pow(min_abs(a_lo[axis], a_hi[axis]), 2);
    }
    const double thrust_hi = std::sqrt(t_max_sq);
    const double thrust_lo = std::sqrt(t_min_sq);
    // |omega_xy| <= |jerk| / |t|, |omega_z| <= |yaw rate| (5% coupling margin).
    const double w3 = 1.05 * max_abs(yaw_rate.min_value, yaw_rate.max_value);
    const double w12 = thrust_lo > 0.0 ? j_abs.norm() / thrust_lo : std::numeric_limits<double>::infinity();
    const double omega_hi = std::sqrt(w12 * w12 + w3 * w3);

    const bool thrust_ok = thrust_lo >= limits.thrust_min && thrust_hi <= limits.thrust_max;
    const bool rate_ok = omega_hi <= limits.omega_max;
    if (thrust_ok && rate_ok) return Feasibility::ok();

    const Constraint reason = thrust_ok ? Constraint::BodyRate : Constraint::Thrust;
    for (double t : {lo, 0.5 * (lo + hi), hi}) {
      const PointLoad p = point_load(seg, t);
      if (p.thrust < limits.thrust_min || p.thrust > limits.thrust_max) return {false, Constraint::Thrust, lo, hi};
      if (p.omega > limits.omega_max) return {false, Constraint::BodyRate, lo, hi};
    }
    if (hi - lo <= min_width) return {false, reason, lo, hi};
    const double mid = 0.5 * (lo + hi);
    const Feasibility left = run(lo, mid);
    if (!left) return left;
    return run(mid, hi);
  }
};

}  // namespace

std::pair<double, double> extrema_bounds(const Polynomial1D& poly, double lo, double hi, int order) {
  const Extrema e = extrema(poly, lo, hi, order);
  return {e.min_value, e.max_value};
}

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::None: return "none";
    case Constraint::Position: return "position";
    case Constraint::Thrust: return "thrust";
    case Constraint::BodyRate: return "body_rate";
    case Constraint::YawAcceleration: return "yaw_acceleration";
  }
  return "unknown";
}

Feasibility check_feasibility(const Segment4D& seg, const Limits& limits) {
  const double T = seg.duration();
  // Coarse samples reject gross violations before the exact root-based checks.
  constexpr int kProbes = 16;
  for (int k = 0; k <= kProbes; ++k) {
    const double tau = static_cast<double>(k) / kProbes;
    for (int axis = 0; axis < 3; ++axis) {
      const double p = seg.position[axis].eval_tau(tau);
      if (p < limits.box_min[axis] || p > limits.box_max[axis]) return {false, Constraint::Position, tau * T, tau * T};
    }
    const double yaw_acc = seg.yaw.eval(tau * T, 2);
    if (std::abs(yaw_acc) > limits.yaw_acc_max) return {false, Constraint::YawAcceleration, tau * T, tau * T};
  }
  for (int axis = 0; axis < 3; ++axis) {
    const Extrema e = extrema(seg.position[axis], 0.0, T, 0);
    if (e.min_value < limits.box_min[axis]) return {false, Constraint::Position, e.t_min, e.t_min};
    if (e.max_value > limits.box_max[axis]) return {false, Constraint::Position, e.t_max, e.t_max};
  }
  const Extrema yaw_acc = extrema(seg.yaw, 0.0, T, 2);
  if (yaw_acc.min_value < -limits.yaw_acc_max) return {false, Constraint::YawAcceleration, yaw_acc.t_min, yaw_acc.t_min};
  if (yaw_acc.max_value > limits.yaw_acc_max) return {false, Constraint::YawAcceleration, yaw_acc.t_max, yaw_acc.t_max};

  const DynamicCheck check{seg, limits, 1e-4 * T};
  return check.run(0.0, T);
}

double sample_segment_time(double distance, double v_max, double budget_left, double t_s_max, std::mt19937_64& rng) {
  if (!(distance >= 0.0) || !(v_max > 0.0)) throw std::invalid_argument("distance must be >= 0 and v_max > 0");
  const double lo = distance / v_max;
  const double hi = std::min(budget_left, t_s_max);
  if (!(hi > lo)) throw std::domain_error("empty segment time interval");
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

nlohmann::json segment_to_json(const Segment4D& seg) {
  auto coeffs = [](const Polynomial1D& p) {
    const auto& c = p.coefficients();
    return std::vector<double>(c.data(), c.data() + c.size());
  };
  nlohmann::json j;
  j["t_s"] = seg.duration();
  j["x"] = coeffs(seg.position[0]);
  j["y"] = coeffs(seg.position[1]);
  j["z"] = coeffs(seg.position[2]);
  j["yaw"] = coeffs(seg.yaw);
  return j;
}

Segment4D segment_from_json(const nlohmann::json& j) {
  const double t_s = j.at("t_s").get<double>();
  auto poly = [&](const char* key, int expected) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (static_cast<int>(v.size()) != expected) throw std::invalid_argument(std::string("segment field ") + key + " has wrong length");
    return Polynomial1D(Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()), t_s);
  };
  Segment4D seg;
  seg.position[0] = poly("x", kPositionDegree + 1);
  seg.position[1] = poly("y", kPositionDegree + 1);
  seg.position[2] = poly("z", kPositionDegree + 1);
  seg.yaw = poly("yaw", kYawDegree + 1);
  return seg;
}

}  // namespace mavcal
