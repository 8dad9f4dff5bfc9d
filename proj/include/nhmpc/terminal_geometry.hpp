#pragma once

/**
 * @file
 * @brief Terminal set: states whose body z-axis and velocity are collinear with the line
 * to the origin, moving toward it slowly enough to stop (V^2 <= 2 a_m r).
 *
 * Two branches share the set: the body axis points at the origin (toward, used by the
 * forward strategy) or away from it (away, used by the reversing strategy). The origin
 * itself is a member for any pitch angle.
 */

#include <array>
#include <cmath>
#include <string_view>

#include "nhmpc/dynamics.hpp"

namespace nhmpc {

enum class Branch {
  toward,  ///< body z-axis points to the origin; forward strategy
  away,    ///< body z-axis points away from the origin; reversing strategy
  origin,  ///< (r, V) = 0
  none,    ///< degenerate or not classifiable
};

std::string_view to_string(Branch b);

/// Pitch angle that points the thrust axis at the origin; atan2(x, -z) with (0, z <= 0) -> 0
/// and (0, z > 0) -> pi.
double reference_pitch(double x, double z);

/// Reference pitch of the reversing strategy, reference_pitch - pi wrapped to [-pi, pi].
double reverse_reference_pitch(double x, double z);

/// Body z-axis expressed in the inertial frame.
inline Vec2 body_z_axis(double theta) { return Vec2(-std::sin(theta), std::cos(theta)); }

struct TerminalMembership
{
  bool member{false};
  Branch branch{Branch::none};
  /// [V x e_z, r x e_z, r.V + |r||V|], each normalized by its natural scale
  std::array<double, 3> residuals{};
  /// V^2 - 2 a_m r (positive means the speed bound is violated)
  double speed_margin{0};
};

/**
 * @brief Terminal-set membership test.
 *
 * Residuals are normalized (V x e_z by max(1,|V|), r x e_z by max(1,|r|), the direction
 * residual by max(1,|r||V|)) and compared against @p tol. The speed bound admits
 * V^2 <= 2 a_m r + tol * max(1, 2 a_m r).
 */
TerminalMembership classify_terminal(const State & s, const InputLimits & lim, double tol = 1e-8);

/// Reduced in-set state. @c v is the speed toward the origin for the toward branch and the
/// algebraic body-axis velocity (non-positive) for the away branch.
struct TerminalSetState
{
  double r{0};
  double theta{0};
  double v{0};
};

/// Reduce a member state. Throws TerminalSetViolation for non-members.
TerminalSetState reduce(const State & s, const InputLimits & lim, double tol = 1e-8);

/// Reduced dynamics: (-v, omega, a) on the toward branch, (+v, omega, a) on the away branch.
/// Throws std::invalid_argument for Branch::origin / Branch::none.
Eigen::Vector3d reduced_rhs(const TerminalSetState & ts, const Control & u, Branch branch);

}  // namespace nhmpc
