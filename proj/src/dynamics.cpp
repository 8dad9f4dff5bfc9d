#include "nhmpc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nhmpc/errors.hpp"

namespace nhmpc {

double wrap_angle(double angle)
{
  return std::remainder(angle, 2.0 * std::numbers::pi);
}

double State::r() const { return std::hypot(x, z); }

double State::speed() const { return std::hypot(vx, vz); }

bool State::is_finite() const
{
  return std::isfinite(x) && std::isfinite(z) && std::isfinite(theta) && std::isfinite(vx)
      && std::isfinite(vz);
}

bool Control::is_finite() const { return std::isfinite(a) && std::isfinite(omega); }

void InputLimits::validate() const
{
  if (!(a_max > 0.0) || !std::isfinite(a_max)) {
    throw ConfigError("a_max must be positive and finite");
  }
  if (!(omega_max > 0.0) || !std::isfinite(omega_max)) {
    throw ConfigError("omega_max must be positive and finite");
  }
}

bool InputLimits::admits(const Control & u, double slack) const
{
  return std::abs(u.a) <= a_max * (1.0 + slack) && std::abs(u.omega) <= omega_max * (1.0 + slack);
}

Control InputLimits::clip(const Control & u) const
{
  return {std::clamp(u.a, -a_max, a_max), std::clamp(u.omega, -omega_max, omega_max)};
}

StateDerivative dynamics_rhs(const State & s, const Control & u)
{
  return {s.vx, s.vz, u.omega, -u.a * std::sin(s.theta), u.a * std::cos(s.theta)};
}

Vec5 dynamics_rhs(const Eigen::Ref<const Vec5> & s, const Eigen::Ref<const Vec2> & u)
{
  return Vec5(s[3], s[4], u[1], -u[0] * std::sin(s[2]), u[0] * std::cos(s[2]));
}

Vec5 rk4_step_raw(const Eigen::Ref<const Vec5> & s, const Eigen::Ref<const Vec2> & u, double h)
{
  const Vec5 k1 = dynamics_rhs(s, u);
  const Vec5 k2 = dynamics_rhs(s + 0.5 * h * k1, u);
  const Vec5 k3 = dynamics_rhs(s + 0.5 * h * k2, u);
  const Vec5 k4 = dynamics_rhs(s + h * k3, u);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

// d f / d[s, u] at (s, u)
Mat57 rhs_jacobian(const Vec5 & s, const Vec2 & u)
{
  const double c = std::cos(s[2]);
  const double sn = std::sin(s[2]);
  Mat57 j = Mat57::Zero();
  j(0, 3) = 1.0;
  j(1, 4) = 1.0;
  j(2, 6) = 1.0;
  j(3, 2) = -u[0] * c;
  j(3, 5) = -sn;
  j(4, 2) = -u[0] * sn;
  j(4, 5) = c;
  return j;
}

}  // namespace

Vec5 rk4_step_sensitivity(const Eigen::Ref<const Vec5> & s, const Eigen::Ref<const Vec2> & u, double h,
                          Mat57 & jac)
{
  Mat57 seed = Mat57::Zero();
  seed.leftCols<5>().setIdentity();

  // stage Jacobians d k_i / d[s, u]; only the state part of z_i depends on earlier stages
  const Vec5 z1 = s;
  const Vec5 k1 = dynamics_rhs(z1, u);
  Mat57 dz = seed;
  Mat57 j1 = rhs_jacobian(z1, u);
  Mat57 dk1 = j1.leftCols<5>() * dz;
  dk1.rightCols<2>() += j1.rightCols<2>();

  const Vec5 z2 = s + 0.5 * h * k1;
  const Vec5 k2 = dynamics_rhs(z2, u);
  dz = seed + 0.5 * h * dk1;
  Mat57 j2 = rhs_jacobian(z2, u);
  Mat57 dk2 = j2.leftCols<5>() * dz;
  dk2.rightCols<2>() += j2.rightCols<2>();

  const Vec5 z3 = s + 0.5 * h * k2;
  const Vec5 k3 = dynamics_rhs(z3, u);
  dz = seed + 0.5 * h * dk2;
  Mat57 j3 = rhs_jacobian(z3, u);
  Mat57 dk3 = j3.leftCols<5>() * dz;
  dk3.rightCols<2>() += j3.rightCols<2>();

  const Vec5 z4 = s + h * k3;
  const Vec5 k4 = dynamics_rhs(z4, u);
  dz = seed + h * dk3;
  Mat57 j4 = rhs_jacobian(z4, u);
  Mat57 dk4 = j4.leftCols<5>() * dz;
  dk4.rightCols<2>() += j4.rightCols<2>();

  jac = seed + (h / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

State rk4_step(const State & s, const Control & u, double h)
{
  if (!(h > 0.0)) { throw std::invalid_argument("rk4_step: step size must be positive"); }
  if (!s.is_finite()) { throw NumericalError("rk4_step: non-finite state"); }
  if (!u.is_finite()) { throw NumericalError("rk4_step: non-finite control"); }
  State next = State::from_vec(rk4_step_raw(s.vec(), u.vec(), h));
  next.theta = wrap_angle(next.theta);
  return next;
}

State rk4_step(const State & s, const Control & u, double h, const InputLimits & limits)
{
  if (!limits.admits(u)) {
    std::ostringstream msg;
    msg << "rk4_step: control (" << u.a << ", " << u.omega << ") outside input limits";
    throw std::invalid_argument(msg.str());
  }
  return rk4_step(s, u, h);
}

Trajectory simulate(const State & s0, const Policy & policy, double h, double t_end)
{
  if (!(h > 0.0)) { throw std::invalid_argument("simulate: step size must be positive"); }
  if (!(t_end >= 0.0)) { throw std::invalid_argument("simulate: t_end must be non-negative"); }

  Trajectory traj;
  State s = s0;
  s.theta = wrap_angle(s.theta);
  traj.t.push_back(0.0);
  traj.states.push_back(s);

  const auto steps = static_cast<long>(std::ceil(t_end / h - 1e-9));
  double t = 0.0;
  for (long k = 0; k < steps; ++k) {
    const double step = (k + 1 == steps) ? t_end - t : h;
    if (step <= 0.0) { break; }
    const Control u = policy(t, s);
    s = rk4_step(s, u, step);
    if (!s.is_finite()) { throw NumericalError("simulate: state diverged"); }
    t = (k + 1 == steps) ? t_end : static_cast<double>(k + 1) * h;
    traj.t.push_back(t);
    traj.states.push_back(s);
    traj.controls.push_back(u);
  }
  return traj;
}

}  // namespace nhmpc
