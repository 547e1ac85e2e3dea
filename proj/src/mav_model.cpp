#include "mavcal/mav_model.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mavcal {

bool ParameterVector::valid() const {
  const Vec6 v = as_vector();
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(v[i]) || v[i] <= 0.0) return false;
  }
  return true;
}

void ParameterVector::validate() const {
  const Vec6 v = as_vector();
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(v[i]) || v[i] <= 0.0) {
      throw std::invalid_argument(std::string("parameter ") + kParameterNames[i] + " must be positive");
    }
  }
}

void RotorGeometry::validate() const {
  if (positions.size() < 4) throw std::invalid_argument("geometry needs at least 4 rotors");
  if (spin.size() != positions.size()) throw std::invalid_argument("spin count does not match rotor count");
  for (int s : spin) {
    if (s != 1 && s != -1) throw std::invalid_argument("spin directions must be +1 or -1");
  }
  if (!(mass > 0.0) || !(arm_length > 0.0)) throw std::invalid_argument("mass and arm length must be positive");
}

bool RotorGeometry::balanced() const {
  int sum = 0;
  for (int s : spin) sum += s;
  return sum == 0;
}

RotorGeometry RotorGeometry::hexacopter(double arm_length, double mass) {
  RotorGeometry g;
  g.mass = mass;
  g.arm_length = arm_length;
  for (int i = 0; i < 6; ++i) {
    const double angle = (30.0 + 60.0 * i) * std::numbers::pi / 180.0;
    g.positions.emplace_back(arm_length * std::cos(angle), arm_length * std::sin(angle), 0.0);
    g.spin.push_back(i % 2 == 0 ? 1 : -1);
  }
  return g;
}

void NoiseConfig::validate() const {
  auto positive = [](const Vec3& v) { return (v.array() > 0.0).all() && v.allFinite(); };
  if (!positive(force_var)) throw std::invalid_argument("noise.force_var must be positive");
  if (!positive(moment_var)) throw std::invalid_argument("noise.moment_var must be positive");
  if (!positive(position_var)) throw std::invalid_argument("noise.position_var must be positive");
  if (!positive(attitude_var)) throw std::invalid_argument("noise.attitude_var must be positive");
  if (!(rate > 0.0) || !std::isfinite(rate)) throw std::invalid_argument("noise.rate must be positive");
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

RotorWrench rotor_wrench(const FullState& state, const InputVector& input, const RotorGeometry& geom) {
  const auto& th = state.theta;
  const Vec3 z_B = Vec3::UnitZ();
  const Vec3 drag_diag(th.c_D, th.c_D, 0.0);
  RotorWrench w;
  w.forces.reserve(geom.positions.size());
  w.moments.reserve(geom.positions.size());
  for (int i = 0; i < geom.rotor_count(); ++i) {
    const double thrust = th.c_T * input[i] * input[i];
    const Vec3 rel_vel = state.v_B + state.omega_B.cross(geom.positions[i]);
    w.forces.push_back(thrust * z_B - thrust * drag_diag.cwiseProduct(rel_vel));
    w.moments.push_back(-geom.spin[i] * th.c_M * thrust * z_B);
  }
  return w;
}

BodyWrench body_wrench(const FullState& state, const InputVector& input, const RotorGeometry& geom) {
  const RotorWrench w = rotor_wrench(state, input, geom);
  BodyWrench b;
  for (int i = 0; i < geom.rotor_count(); ++i) {
    b.force += w.forces[i];
    b.torque += w.moments[i] + geom.positions[i].cross(w.forces[i]);
  }
  return b;
}

namespace {

Vec4 quat_rate(const Quat& q, const Vec3& omega_B) {
  // q_dot = 1/2 q (x) [0, omega_B]  (Hamilton product, world <- base)
  const Quat omega(0.0, omega_B.x(), omega_B.y(), omega_B.z());
  const Quat r = q * omega;
  return 0.5 * Vec4(r.w(), r.x(), r.y(), r.z());
}

}  // namespace

StateDerivative dynamics_derivative(const FullState& state, const InputVector& input,
                                    const RotorGeometry& geom, const Vec6& process_noise) {
  const BodyWrench b = body_wrench(state, input, geom);
  const Mat3 C_WB = state.q.toRotationMatrix();
  const Mat3 J = state.theta.inertia();
  const Vec3& w = state.omega_B;

  StateDerivative d;
  d.p_dot = C_WB * state.v_B;
  d.v_dot = (b.force + process_noise.head<3>()) / geom.mass - w.cross(state.v_B) - C_WB.transpose() * gravity_vector();
  d.q_dot = quat_rate(state.q, w);
  const Vec3 total_torque = b.torque + process_noise.tail<3>() - w.cross(J * w);
  d.omega_dot = total_torque.cwiseQuotient(Vec3(state.theta.j_x, state.theta.j_y, state.theta.j_z));
  return d;
}

namespace {

FullState advance(const FullState& s, const StateDerivative& d, double h) {
  FullState out = s;
  out.p_W += h * d.p_dot;
  out.v_B += h * d.v_dot;
  const Vec4 q = Vec4(s.q.w(), s.q.x(), s.q.y(), s.q.z()) + h * d.q_dot;
  out.q = Quat(q[0], q[1], q[2], q[3]);
  out.omega_B += h * d.omega_dot;
  return out;
}

}  // namespace

FullState rk4_step(const FullState& state, const InputVector& input_begin, const InputVector& input_end,
                   const RotorGeometry& geom, double dt, const Vec6& process_noise) {
  const InputVector input_mid = 0.5 * (input_begin + input_end);
  const StateDerivative k1 = dynamics_derivative(state, input_begin, geom, process_noise);
  const StateDerivative k2 = dynamics_derivative(advance(state, k1, 0.5 * dt), input_mid, geom, process_noise);
  const StateDerivative k3 = dynamics_derivative(advance(state, k2, 0.5 * dt), input_mid, geom, process_noise);
  const StateDerivative k4 = dynamics_derivative(advance(state, k3, dt), input_end, geom, process_noise);

  StateDerivative sum;
  sum.p_dot = (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot) / 6.0;
  sum.v_dot = (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot) / 6.0;
  sum.q_dot = (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot) / 6.0;
  sum.omega_dot = (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot) / 6.0;
  FullState next = advance(state, sum, dt);
  next.q.normalize();
  return next;
}

PoseMeasurement measure(const FullState& state, const Vec3& noise_p, const Vec3& noise_phi) {
  PoseMeasurement z;
  z.position = state.p_W + noise_p;
  const Quat noise(1.0, 0.5 * noise_phi.x(), 0.5 * noise_phi.y(), 0.5 * noise_phi.z());
  z.attitude = (state.q * noise).normalized();
  return z;
}

Vec3 quat_error(const Quat& q_nominal, const Quat& q) {
  const Quat dq = q_nominal.conjugate() * q;
  if (!(dq.w() > 0.0)) throw DomainError("attitude error of 180 degrees or more");
  return 2.0 * dq.vec() / dq.w();
}

Quat quat_compose(const Quat& q_nominal, const Vec3& delta_psi) {
  const Quat dq(1.0, 0.5 * delta_psi.x(), 0.5 * delta_psi.y(), 0.5 * delta_psi.z());
  return (q_nominal * dq.normalized()).normalized();
}

Quat canonical(const Quat& q) {
  if (q.w() < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

double mechanical_energy(const FullState& state, const RotorGeometry& geom) {
  const Mat3 J = state.theta.inertia();
  const double kinetic = 0.5 * geom.mass * state.v_B.squaredNorm() + 0.5 * state.omega_B.dot(J * state.omega_B);
  return kinetic + geom.mass * kGravity * state.p_W.z();
}

}  // namespace mavcal
