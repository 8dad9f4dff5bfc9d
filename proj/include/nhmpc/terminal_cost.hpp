#pragma once

/**
 * @file
 * @brief Closed-form terminal cost: the stage cost r^2 + V^2 + theta^2 integrated along the
 * auxiliary in-set trajectory (accelerate, decelerate, rotate back) from a terminal-set state.
 */

#include <array>
#include <optional>

#include "nhmpc/dynamics.hpp"
#include "nhmpc/terminal_geometry.hpp"

namespace nhmpc {

/// Mutation hook for verification harnesses: scales the (V^2 + 2 a_m r)^{3/2} term of the
/// cost and its derivatives. Production code leaves it at 1.
struct TerminalCostOptions
{
  double power_term_scale{1.0};
};

struct TerminalCostValue
{
  double f{0};
  /// (f1, f2, f3, f4): accelerate, decelerate, rotate, rest; only filled by the oracle
  std::optional<std::array<double, 4>> parts;
};

struct TerminalCostGradient
{
  double d_r{0};
  double d_theta{0};
  double d_v{0};
  double sigma1{0};  ///< 23 V^2 + 40 a_m^2 + 46 r a_m
  double sigma2{0};  ///< V^2 + 2 a_m r
};

/// Stage cost x^2 + z^2 + vx^2 + vz^2 + theta^2.
double stage_cost(const State & s);

/// Stage cost on the reduced state, r^2 + v^2 + theta^2.
double stage_cost(const TerminalSetState & ts);

/**
 * @brief Closed-form terminal cost.
 *
 * @p branch selects the sign convention of ts.v (see TerminalSetState). Throws
 * TerminalSetViolation unless v^2 <= 2 a_m r (relative slack 1e-9) with the speed pointing
 * toward the origin.
 */
TerminalCostValue terminal_cost(const TerminalSetState & ts, const InputLimits & lim,
                                Branch branch = Branch::toward, const TerminalCostOptions & opt = {});

/**
 * @brief Quadrature reference for terminal_cost.
 *
 * Integrates the stage cost along the analytic piecewise-polynomial in-set trajectory with
 * 32-node Gauss-Legendre panels no longer than @p quad_step seconds.
 */
TerminalCostValue terminal_cost_oracle(const TerminalSetState & ts, const InputLimits & lim,
                                       double quad_step = 1.0, Branch branch = Branch::toward);

/// Closed form of the decelerate-phase integral in terms of the switching times t1, t2.
double decelerate_integral_closed_form(double r, double v, double theta, double t1, double t2,
                                       double a_max);

/// Partial derivatives with respect to (r, theta, v). At (r, v) = 0 returns
/// (0, sign(theta) theta^2 / omega_m, 0).
TerminalCostGradient terminal_cost_gradient(const TerminalSetState & ts, const InputLimits & lim,
                                            Branch branch = Branch::toward,
                                            const TerminalCostOptions & opt = {});

/// Time derivative of the terminal cost along the reduced dynamics under @p u.
double terminal_cost_time_derivative(const TerminalSetState & ts, const Control & u,
                                     const InputLimits & lim, Branch branch = Branch::toward,
                                     const TerminalCostOptions & opt = {});

/**
 * @brief Twice-differentiable variant for optimizers.
 *
 * Evaluates the closed form at speed @p v >= 0 without the admissibility check, replacing
 * |theta|^3 by (theta^2 + mu^2)^{3/2} - mu^3. Requires v^2 + 2 a_m r > 0.
 * Returns (value, d/dr, d/dtheta, d/dv).
 */
std::array<double, 4> terminal_cost_smooth(double r, double theta, double v, const InputLimits & lim,
                                           double mu);

}  // namespace nhmpc
