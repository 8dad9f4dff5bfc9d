#include "nhmpc/aux_controller.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "nhmpc/errors.hpp"

namespace nhmpc {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double strategy_target(const State & s, Branch strategy)
{
  return strategy == Branch::away ? reverse_reference_pitch(s.x, s.z) : reference_pitch(s.x, s.z);
}

// Sampled double integrator toward the origin: distance p, speed v (toward), k samples of
// constant accelerations a_i in [-a_m, a_m]. Arrival at (0, 0) requires
//   sum a_i = -v / h                          =: S
//   sum (k - i - 1/2) a_i = (p - k v h) / h^2 =: P
// Only non-increasing sequences are used, so the speed never reverses and the state stays
// under the speed bound. For fixed S their P ranges from the constant sequence (S k / 2) to
// the staircase that loads the acceleration budget onto the earliest samples (P_max).
struct ArrivalBounds
{
  bool feasible{false};
  bool hopeless{false};  ///< no larger k can be feasible either
  double p_target{0};
  double p_min{0};
  double p_max{0};
  double first_hi{0};
  double first_lo{0};
};

ArrivalBounds arrival_bounds(double p, double v, double a_m, double h, long k)
{
  ArrivalBounds out;
  const double kd = static_cast<double>(k);
  const double sum = -v / h;
  const double scale = a_m * kd * kd + std::abs(p) / (h * h) + 1.0;
  const double slack = 1e-9 * scale;
  out.p_target = (p - kd * v * h) / (h * h);
  out.p_min = sum * kd / 2.0;
  if (v < -1e-12 * (1.0 + std::abs(v))) {
    out.hopeless = true;
    return out;
  }
  if (out.p_target < out.p_min - slack) {
    out.hopeless = kd * a_m * h >= v;
    return out;
  }
  if (std::abs(sum) > a_m * kd + 1e-10 * (a_m * kd + std::abs(sum))) { return out; }

  const double budget = std::clamp(sum + a_m * kd, 0.0, 2.0 * a_m * kd);
  const double full = std::min(std::floor(budget / (2.0 * a_m)), kd);
  const double rem = budget - 2.0 * a_m * full;
  const double base = -a_m * kd * kd / 2.0;

  out.p_max = base + 2.0 * a_m * (full * kd - full * full / 2.0) + (full < kd ? rem * (kd - full - 0.5) : 0.0);
  out.first_hi = -a_m + std::min(2.0 * a_m, budget);
  out.first_lo = sum / kd;
  out.feasible = out.p_target <= out.p_max + slack;
  return out;
}

// Plan [a_m x m, t, -d x n] with n = k - m - 1, -d <= t <= a_m, 0 <= d <= a_m, matching the
// arrival sums; returns its first entry.
std::optional<double> staircase_first(const ArrivalBounds & b, double a_m, long k)
{
  const double sum = b.p_min * 2.0 / static_cast<double>(k);
  const double tol = 1e-9 * a_m;
  for (long m = 0; m < k; ++m) {
    const double md = static_cast<double>(m);
    const double n = static_cast<double>(k - m - 1);
    const double A = sum - md * a_m;
    const double B = b.p_target - a_m * (md * static_cast<double>(k) - md * md / 2.0);
    double d = 0.0;
    double t = A;
    if (n > 0) {
      d = (B - (n + 0.5) * A) / (n * (n + 1.0) / 2.0);
      t = A + n * d;
    } else if (std::abs(0.5 * A - B) > 1e-9 * (1.0 + std::abs(B))) {
      continue;
    }
    if (d < -tol || d > a_m + tol || t > a_m + tol || t < -d - tol) { continue; }
    return m > 0 ? a_m : std::clamp(t, -a_m, a_m);
  }
  return std::nullopt;
}

}  // namespace

double arrival_acceleration(double distance, double speed, double a_max, double step)
{
  const double p = distance;
  const double v = speed;
  const double h = step;
  if (v < 0.0) { return std::min(a_max, -v / h); }

  // continuous-time minimum arrival time gives a lower bound on the sample count
  long k = 1;
  if (v * v <= 2.0 * a_max * p) {
    const double t_min = (-v + std::sqrt(2.0) * std::sqrt(v * v + 2.0 * a_max * p)) / a_max;
    k = std::max(1L, static_cast<long>(std::floor(t_min / h)) - 1);
  }

  constexpr long max_samples = 1'000'000;
  for (; k < max_samples; ++k) {
    const auto b = arrival_bounds(p, v, a_max, h, k);
    if (b.hopeless) { break; }
    if (!b.feasible) { continue; }
    if (k == 1) { return std::clamp(-v / h, -a_max, a_max); }

    if (const auto a0 = staircase_first(b, a_max, k)) { return *a0; }

    // first entry of the matching convex combination of the extreme sequences
    const double span = b.p_max - b.p_min;
    const double lambda = span > 0.0 ? std::clamp((b.p_target - b.p_min) / span, 0.0, 1.0) : 0.0;
    return std::clamp(b.first_lo + lambda * (b.first_hi - b.first_lo), -a_max, a_max);
  }
  // too fast for an exact landing on the sample grid: brake, stopping within one sample at the end
  return -std::min(a_max, v / h);
}

Control aux_control(const State & s, const InputLimits & lim, Branch strategy, const AuxOptions & opt)
{
  if (strategy != Branch::toward && strategy != Branch::away) {
    throw std::invalid_argument("aux_control: strategy must be toward or away");
  }
  const double r = s.r();
  const double v = s.speed();

  if (r <= opt.origin_tol && v <= opt.origin_tol) {
    if (std::abs(s.theta) <= opt.angle_tol) { return {0.0, 0.0}; }
    return {0.0, -sign(s.theta) * std::min(lim.omega_max, std::abs(s.theta) / opt.step)};
  }

  const double diff = wrap_angle(strategy_target(s, strategy) - s.theta);
  const Branch other = strategy == Branch::away ? Branch::toward : Branch::away;
  if (std::abs(diff) > opt.angle_tol && v <= opt.origin_tol && r <= lim.a_max * opt.step * opt.step
      && std::abs(wrap_angle(strategy_target(s, other) - s.theta)) <= opt.angle_tol) {
    // stopped just past the origin after braking: return along the other branch
    strategy = other;
  } else if (std::abs(diff) > opt.angle_tol) {
    return {0.0, sign(diff) * std::min(lim.omega_max, std::abs(diff) / opt.step)};
  }

  const double toward_speed = r > 0.0 ? -(s.x * s.vx + s.z * s.vz) / r : -v;
  const double a = arrival_acceleration(r, toward_speed, lim.a_max, opt.step);
  return {strategy == Branch::away ? -a : a, 0.0};
}

Branch preferred_strategy(const State & s)
{
  const double fwd = std::abs(wrap_angle(reference_pitch(s.x, s.z) - s.theta));
  const double rev = std::abs(wrap_angle(reverse_reference_pitch(s.x, s.z) - s.theta));
  return rev < fwd ? Branch::away : Branch::toward;
}

AuxTimestamps lemma1_timestamps(double r, double v, double theta, const InputLimits & lim)
{
  lim.validate();
  const double a = lim.a_max;
  const double bound = 2.0 * a * r;
  if (!(r >= 0.0) || v < -1e-12 || v * v > bound * (1.0 + 1e-9) + 1e-300) {
    throw TerminalSetViolation("lemma1_timestamps: requires 0 <= v, v^2 <= 2 a_m r");
  }
  const double rot = std::abs(theta) / lim.omega_max;
  if (r == 0.0 && v <= 0.0) { return {0.0, 0.0, rot}; }

  const double root = std::sqrt(v * v + bound);
  const double t1 = std::max(0.0, -v / a + root / (a * std::numbers::sqrt2));
  const double t2 = -v / a + std::numbers::sqrt2 * root / a;
  return {t1, t2, t2 + rot};
}

std::string_view to_string(PhaseKind k)
{
  switch (k) {
    case PhaseKind::rotate_to_set: return "rotate_to_set";
    case PhaseKind::accelerate: return "accelerate";
    case PhaseKind::decelerate: return "decelerate";
    case PhaseKind::rotate_to_zero: return "rotate_to_zero";
    case PhaseKind::stop: return "stop";
  }
  return "stop";
}

std::vector<AuxPhase> phase_plan(const State & s0, const InputLimits & lim, Branch strategy)
{
  lim.validate();
  constexpr double tol = 1e-9;
  const double r = s0.r();
  const double v = s0.speed();
  constexpr double inf = std::numeric_limits<double>::infinity();

  if (r <= tol && v <= tol && std::abs(s0.theta) <= tol) { return {{PhaseKind::stop, 0.0, inf}}; }

  double rotate = 0.0;
  double target = s0.theta;
  double speed = 0.0;
  if (v <= tol) {
    if (r > tol) {
      target = strategy_target(s0, strategy);
      rotate = std::abs(wrap_angle(target - s0.theta)) / lim.omega_max;
    }
  } else {
    const auto m = classify_terminal(s0, lim, 1e-8);
    if (!m.member) { throw TerminalSetViolation("phase_plan: moving state outside the terminal set"); }
    speed = v;
  }

  const auto ts = lemma1_timestamps(r <= tol ? 0.0 : r, speed, target, lim);
  std::vector<AuxPhase> plan;
  double t = 0.0;
  auto push = [&](PhaseKind kind, double duration) {
    plan.push_back({kind, t, t + duration});
    t += duration;
  };
  push(PhaseKind::rotate_to_set, rotate);
  push(PhaseKind::accelerate, ts.t1);
  push(PhaseKind::decelerate, ts.t2 - ts.t1);
  push(PhaseKind::rotate_to_zero, ts.t3 - ts.t2);
  plan.push_back({PhaseKind::stop, t, inf});
  return plan;
}

std::vector<AuxPhase> detect_phases(const Trajectory & traj, double a_tol)
{
  std::vector<AuxPhase> phases;
  bool translated = false;
  for (std::size_t k = 0; k < traj.controls.size(); ++k) {
    const Control & u = traj.controls[k];
    PhaseKind kind = PhaseKind::stop;
    if (std::abs(u.a) > a_tol) {
      translated = true;
      kind = traj.states[k + 1].speed() >= traj.states[k].speed() ? PhaseKind::accelerate
                                                                   : PhaseKind::decelerate;
    } else if (u.omega != 0.0) {
      kind = translated ? PhaseKind::rotate_to_zero : PhaseKind::rotate_to_set;
    }
    if (!phases.empty() && phases.back().kind == kind) {
      phases.back().t_end = traj.t[k + 1];
    } else {
      phases.push_back({kind, traj.t[k], traj.t[k + 1]});
    }
  }
  return phases;
}

Trajectory aux_rollout(const State & s0, const InputLimits & lim, Branch strategy, double step, int steps)
{
  Trajectory traj;
  AuxOptions opt;
  opt.step = step;
  Vec5 s = s0.vec();
  traj.t.push_back(0.0);
  traj.states.push_back(s0);
  for (int k = 0; k < steps; ++k) {
    const Control u = aux_control(State::from_vec(s), lim, strategy, opt);
    s = rk4_step_raw(s, u.vec(), step);
    traj.t.push_back(static_cast<double>(k + 1) * step);
    traj.states.push_back(State::from_vec(s));
    traj.controls.push_back(u);
  }
  return traj;
}

}  // namespace nhmpc
