#pragma once

/**
 * @file
 * @brief Discontinuous auxiliary stabilizing strategies.
 *
 * Forward strategy (Branch::toward): rotate until the body z-axis points at the origin,
 * accelerate then decelerate along the line to the origin, rotate back to theta = 0, stop.
 * Reverse strategy (Branch::away): same with the body axis pointing away from the origin and
 * the translation reversed.
 *
 * The continuous-time bang-bang translation is realized in sampled time as the minimum-step
 * exact-arrival profile of the double integrator over non-increasing acceleration sequences:
 * accelerate at the limit, one transition step, then brake, landing on the origin at a step
 * boundary. States too close to the speed bound for an exact landing brake at the limit and
 * stop within one step, just past the origin; the vehicle then returns on the other branch.
 */

#include <limits>
#include <string_view>
#include <vector>

#include "nhmpc/dynamics.hpp"
#include "nhmpc/terminal_geometry.hpp"

namespace nhmpc {

struct AuxOptions
{
  /// sampling step of the zero-order hold the control is applied with
  double step{0.1};
  /// |theta - theta_ref| below this counts as aligned
  double angle_tol{1e-9};
  /// (r, V) below this counts as the origin
  double origin_tol{1e-9};
};

/// Auxiliary control for the given strategy. Rotations are clipped on the last step so the
/// pitch lands exactly on its target.
Control aux_control(const State & s, const InputLimits & lim, Branch strategy, const AuxOptions & opt = {});

/// Strategy that needs the smaller initial rotation (ties go to the forward strategy).
Branch preferred_strategy(const State & s);

/**
 * @brief Acceleration toward the origin for the next sample of the exact-arrival profile.
 *
 * @param distance distance to the origin along the line
 * @param speed velocity toward the origin
 */
double arrival_acceleration(double distance, double speed, double a_max, double step);

struct AuxTimestamps
{
  double t1{0};
  double t2{0};
  double t3{0};
};

/// In-set switching times from terminal-set entry. Throws TerminalSetViolation unless
/// v^2 <= 2 a_m r (relative slack 1e-9) and v >= 0.
AuxTimestamps lemma1_timestamps(double r, double v, double theta, const InputLimits & lim);

enum class PhaseKind { rotate_to_set, accelerate, decelerate, rotate_to_zero, stop };

std::string_view to_string(PhaseKind k);

struct AuxPhase
{
  PhaseKind kind{PhaseKind::stop};
  double t_start{0};
  double t_end{std::numeric_limits<double>::infinity()};

  double duration() const { return t_end - t_start; }
};

/**
 * @brief Continuous-time phase plan from a state at rest or inside the terminal set.
 *
 * Returns [rotate_to_set, accelerate, decelerate, rotate_to_zero, stop]; zero-length phases
 * are kept so the list always has this shape, except at the origin with theta = 0, which
 * yields a single stop phase. Throws TerminalSetViolation when the state is moving but
 * outside the terminal set.
 */
std::vector<AuxPhase> phase_plan(const State & s0, const InputLimits & lim, Branch strategy);

/// Phases detected on a sampled trajectory by the sign pattern of the applied controls.
std::vector<AuxPhase> detect_phases(const Trajectory & traj, double a_tol = 1e-12);

/**
 * @brief Roll the auxiliary controller out for @p steps samples without wrapping theta.
 *
 * The result is continuous in theta so it can seed a shooting transcription.
 */
Trajectory aux_rollout(const State & s0, const InputLimits & lim, Branch strategy, double step, int steps);

}  // namespace nhmpc
