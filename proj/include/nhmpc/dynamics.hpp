#pragma once

/**
 * @file
 * @brief Planar drift-nonholonomic vehicle: state, inputs, dynamics and RK4 integration.
 *
 * The vehicle can only accelerate along its body z-axis e_z = (-sin theta, cos theta)
 * and rotate about its center of mass:
 *
 *   x' = vx,  z' = vz,  theta' = omega,  vx' = -a sin(theta),  vz' = a cos(theta).
 */

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace nhmpc {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Vec2 = Eigen::Matrix<double, 2, 1>;

/// Wrap an angle to [-pi, pi].
double wrap_angle(double angle);

struct State
{
  double x{0};
  double z{0};
  double theta{0};
  double vx{0};
  double vz{0};

  /// Distance to the origin.
  double r() const;
  /// Speed magnitude.
  double speed() const;

  Vec5 vec() const { return Vec5(x, z, theta, vx, vz); }
  static State from_vec(const Eigen::Ref<const Vec5> & v) { return {v[0], v[1], v[2], v[3], v[4]}; }

  bool is_finite() const;
};

struct StateDerivative
{
  double x{0};
  double z{0};
  double theta{0};
  double vx{0};
  double vz{0};

  Vec5 vec() const { return Vec5(x, z, theta, vx, vz); }
};

struct Control
{
  double a{0};      ///< acceleration along the body z-axis (m/s^2)
  double omega{0};  ///< angular rate (rad/s)

  Vec2 vec() const { return Vec2(a, omega); }
  bool is_finite() const;
};

struct InputLimits
{
  double a_max{1.4142135623730951};
  double omega_max{0.39269908169872414};

  /// Throws ConfigError unless both limits are positive and finite.
  void validate() const;

  /// True when |a| <= a_max and |omega| <= omega_max, up to a relative slack.
  bool admits(const Control & u, double slack = 1e-12) const;

  Control clip(const Control & u) const;
};

/// Continuous-time vector field.
StateDerivative dynamics_rhs(const State & s, const Control & u);

/// Vector field on raw vectors (no wrapping, no checks); used by the transcription.
Vec5 dynamics_rhs(const Eigen::Ref<const Vec5> & s, const Eigen::Ref<const Vec2> & u);

/// Classical RK4 step with u held constant; theta is *not* wrapped.
Vec5 rk4_step_raw(const Eigen::Ref<const Vec5> & s, const Eigen::Ref<const Vec2> & u, double h);

using Mat57 = Eigen::Matrix<double, 5, 7>;

/// rk4_step_raw plus its Jacobian [d/ds, d/du] by forward propagation through the stages.
Vec5 rk4_step_sensitivity(const Eigen::Ref<const Vec5> & s, const Eigen::Ref<const Vec2> & u, double h,
                          Mat57 & jac);

/// RK4 step with the input held constant over the step, theta re-wrapped afterwards.
/// Throws NumericalError on non-finite input, std::invalid_argument for h <= 0.
State rk4_step(const State & s, const Control & u, double h);

/// Strict variant: additionally rejects controls outside @p limits.
State rk4_step(const State & s, const Control & u, double h, const InputLimits & limits);

/// Control source sampled at step boundaries.
using Policy = std::function<Control(double t, const State & s)>;

struct Trajectory
{
  std::vector<double> t;
  std::vector<State> states;      ///< states.size() == t.size()
  std::vector<Control> controls;  ///< control applied on [t_k, t_{k+1}); one fewer than states
};

/**
 * @brief Integrate the closed loop with zero-order hold on the policy.
 *
 * The final step is shortened when t_end is not a multiple of h. Throws NumericalError
 * when the state diverges.
 */
Trajectory simulate(const State & s0, const Policy & policy, double h, double t_end);

}  // namespace nhmpc
