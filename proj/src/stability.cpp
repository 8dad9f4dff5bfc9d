#include "nhmpc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "nhmpc/aux_controller.hpp"
#include "nhmpc/terminal_geometry.hpp"

namespace nhmpc {

namespace {

constexpr std::size_t max_listed = 10;

struct Sampler
{
  std::mt19937_64 rng;
  std::uniform_real_distribution<double> unit{0.0, 1.0};

  explicit Sampler(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(rng); }

  // (r, theta, speed) with speed^2 < 2 a_m r scaled by frac_max
  TerminalSetState admissible(double r_max, double a_max, double frac_max = 1.0)
  {
    TerminalSetState ts;
    ts.r = r_max * (1.0 - unit(rng));  // (0, r_max]
    ts.theta = uniform(-std::numbers::pi, std::numbers::pi);
    ts.v = std::sqrt(2.0 * a_max * ts.r) * frac_max * unit(rng);
    return ts;
  }
};

void record(ConditionCheck & c, double residual, std::vector<double> sample)
{
  if (!std::isfinite(residual)) { residual = std::numeric_limits<double>::infinity(); }
  c.worst = std::max(c.worst, residual);
  if (residual > c.tolerance) {
    c.passed = false;
    if (c.violations.size() < max_listed) { c.violations.push_back(std::move(sample)); }
  }
}

// member state on the given branch: position along direction phi, speed toward the origin
State in_set_state(double r, double phi, double speed, Branch branch)
{
  State s;
  s.x = r * std::cos(phi);
  s.z = r * std::sin(phi);
  s.theta = branch == Branch::away ? reverse_reference_pitch(s.x, s.z) : reference_pitch(s.x, s.z);
  s.vx = -speed * std::cos(phi);
  s.vz = -speed * std::sin(phi);
  return s;
}

ConditionCheck check_terminal_set(const VerifyOptions & opt, Sampler & rng)
{
  ConditionCheck c{"SC1_terminal_set", true, 0.0, 0.0, "origin membership and membership of speed-bound boundary states", {}};
  const auto origin = classify_terminal(State{}, opt.limits);
  record(c, origin.member && origin.branch == Branch::origin ? 0.0 : 1.0, {0.0, 0.0, 0.0});
  for (int i = 0; i < opt.samples; ++i) {
    const double r = opt.r_max * (1.0 - rng.unit(rng.rng));
    const double phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Branch b = (i % 2 == 0) ? Branch::toward : Branch::away;
    const State s = in_set_state(r, phi, std::sqrt(2.0 * opt.limits.a_max * r), b);
    const auto m = classify_terminal(s, opt.limits);
    record(c, m.member ? 0.0 : 1.0, {r, phi, s.speed()});
  }
  return c;
}

ConditionCheck check_stage_cost(const VerifyOptions & opt, Sampler & rng)
{
  ConditionCheck c{"SC2_stage_cost", true, 0.0, 0.0, "L(0) = 0 and L > 0 away from the origin", {}};
  record(c, std::abs(stage_cost(State{})), {0, 0, 0, 0, 0});
  for (int i = 0; i < opt.samples; ++i) {
    State s{rng.uniform(-opt.r_max, opt.r_max), rng.uniform(-opt.r_max, opt.r_max),
            rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    record(c, stage_cost(s) > 0.0 ? 0.0 : 1.0, {s.x, s.z, s.theta, s.vx, s.vz});
  }
  return c;
}

ConditionCheck check_terminal_cost(const VerifyOptions & opt, Sampler & rng)
{
  ConditionCheck c{"SC3_terminal_cost", true, 0.0, 1e-5, "", {}};
  const auto & lim = opt.limits;
  record(c, std::abs(terminal_cost({0, 0, 0}, lim, Branch::toward, opt.cost).f), {0, 0, 0});
  for (int i = 0; i < opt.samples; ++i) {
    const auto ts = rng.admissible(opt.r_max, lim.a_max);
    const double f = terminal_cost(ts, lim, Branch::toward, opt.cost).f;
    record(c, f >= 0.0 ? 0.0 : -f, {ts.r, ts.theta, ts.v});

    // gradient continuity across the accelerate/decelerate switching surface
    const double vb = std::sqrt(2.0 * lim.a_max * ts.r);
    const auto on = terminal_cost_gradient({ts.r, ts.theta, vb}, lim, Branch::toward, opt.cost);
    const auto in = terminal_cost_gradient({ts.r, ts.theta, vb * (1.0 - 1e-9)}, lim, Branch::toward, opt.cost);
    const double jump = std::max({std::abs(on.d_r - in.d_r), std::abs(on.d_theta - in.d_theta),
                                  std::abs(on.d_v - in.d_v)});
    const double scale = std::max({1.0, std::abs(on.d_r), std::abs(on.d_theta), std::abs(on.d_v)});
    record(c, jump / scale, {ts.r, ts.theta, vb});
  }

  // one-sided behaviour toward the origin line, reported only
  std::ostringstream note;
  note << "F >= 0, F(0) = 0, gradient continuous across V^2 = 2 a_m r; toward (r, V) = 0 with theta = 1: ";
  for (double r : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const auto g = terminal_cost_gradient({r, 1.0, 0.0}, lim, Branch::toward, opt.cost);
    note << "dF/dr(r=" << r << ")=" << g.d_r << " ";
  }
  note << "(d/dr grows like sigma2^-1/2; not asserted)";
  c.note = note.str();
  return c;
}

ConditionCheck check_reachability(const VerifyOptions & opt)
{
  ConditionCheck c{"SC4_reachability", true, 0.0, 0.0, "", {}};
  // with both strategies available the rotation onto the terminal set never exceeds pi/2
  const double step_rot = opt.limits.omega_max * opt.delta;
  const int needed = static_cast<int>(std::ceil(std::numbers::pi / 2.0 / step_rot - 1e-9)) + 1;
  const int needed_single = static_cast<int>(std::ceil(std::numbers::pi / step_rot - 1e-9)) + 1;
  c.worst = needed;
  c.tolerance = opt.horizon;
  c.passed = needed <= opt.horizon;
  std::ostringstream note;
  note << "by construction: rotation onto the terminal set is at most pi/2 when the strategy with the "
          "smaller rotation is chosen, needing "
       << needed << " samples of the horizon " << opt.horizon << " (a single strategy needs up to "
       << needed_single << ")";
  c.note = note.str();
  return c;
}

ConditionCheck check_lyapunov(const VerifyOptions & opt, Sampler & rng)
{
  ConditionCheck c{"SC5_lyapunov", true, 0.0, opt.lyapunov_tol,
                   "|dF/dt + L| / max(1, L) under accelerate, decelerate and rotate-at-origin, both branches", {}};
  const auto & lim = opt.limits;
  const double a = lim.a_max;
  const double w = lim.omega_max;
  for (int i = 0; i < opt.samples; ++i) {
    for (Branch b : {Branch::toward, Branch::away}) {
      const double s = b == Branch::away ? -1.0 : 1.0;

      // accelerate strictly inside
      auto ts = rng.admissible(opt.r_max, a, 0.999);
      TerminalSetState tsb{ts.r, ts.theta, s * ts.v};
      double L = stage_cost(tsb);
      double dF = terminal_cost_time_derivative(tsb, {s * a, 0.0}, lim, b, opt.cost);
      record(c, std::abs(dF + L) / std::max(1.0, L), {1.0, ts.r, ts.theta, tsb.v});

      // decelerate on the boundary
      const double vb = std::sqrt(2.0 * a * ts.r);
      tsb = {ts.r, ts.theta, s * vb};
      L = stage_cost(tsb);
      dF = terminal_cost_time_derivative(tsb, {-s * a, 0.0}, lim, b, opt.cost);
      record(c, std::abs(dF + L) / std::max(1.0, L), {2.0, ts.r, ts.theta, tsb.v});
    }

    // rotate at the origin
    const double th = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const TerminalSetState o{0.0, th, 0.0};
    const double sgn = th > 0 ? 1.0 : (th < 0 ? -1.0 : 0.0);
    const double L = stage_cost(o);
    const double dF = terminal_cost_time_derivative(o, {0.0, -sgn * w}, lim, Branch::toward, opt.cost);
    record(c, std::abs(dF + L) / std::max(1.0, L), {3.0, 0.0, th, 0.0});
  }
  return c;
}

ConditionCheck check_invariance(const VerifyOptions & opt, Sampler & rng)
{
  ConditionCheck c{"SC5_invariance", true, 0.0, 0.0,
                   "terminal-set membership (tol 1e-6) persists along the sampled auxiliary closed loop", {}};
  const int runs = std::min(opt.samples, 40);
  AuxOptions aux;
  aux.step = opt.delta;
  for (int i = 0; i < runs; ++i) {
    const Branch b = (i % 2 == 0) ? Branch::toward : Branch::away;
    const double r = rng.uniform(0.05, opt.r_max);
    const double phi = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double speed = std::sqrt(2.0 * opt.limits.a_max * r) * rng.unit(rng.rng);
    State s = in_set_state(r, phi, speed, b);
    const auto ts = lemma1_timestamps(r, speed, s.theta, opt.limits);
    const int steps = static_cast<int>(std::ceil(ts.t3 / opt.delta)) + 10;
    for (int k = 0; k < steps; ++k) {
      s = rk4_step(s, aux_control(s, opt.limits, b, aux), opt.delta);
      const auto m = classify_terminal(s, opt.limits, 1e-6);
      record(c, m.member ? 0.0 : 1.0, {static_cast<double>(i), static_cast<double>(k), s.x, s.z});
      if (!m.member) { break; }
    }
  }
  return c;
}

}  // namespace

bool StabilityReport::passed() const
{
  return std::all_of(checks.begin(), checks.end(), [](const auto & c) { return c.passed; });
}

const ConditionCheck * StabilityReport::find(const std::string & name) const
{
  for (const auto & c : checks) {
    if (c.name == name) { return &c; }
  }
  return nullptr;
}

nlohmann::json StabilityReport::to_json() const
{
  nlohmann::json j;
  j["passed"] = passed();
  auto & arr = j["checks"] = nlohmann::json::array();
  for (const auto & c : checks) {
    arr.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"worst_residual", c.worst},
                   {"tolerance", c.tolerance},
                   {"note", c.note},
                   {"violations", c.violations}});
  }
  return j;
}

StabilityReport verify_stability_conditions(const VerifyOptions & opt)
{
  if (opt.samples <= 0) { throw std::invalid_argument("verify_stability_conditions: samples must be > 0"); }
  opt.limits.validate();
  Sampler rng(opt.seed);
  StabilityReport rep;
  rep.checks.push_back(check_terminal_set(opt, rng));
  rep.checks.push_back(check_stage_cost(opt, rng));
  rep.checks.push_back(check_terminal_cost(opt, rng));
  rep.checks.push_back(check_reachability(opt));
  rep.checks.push_back(check_lyapunov(opt, rng));
  rep.checks.push_back(check_invariance(opt, rng));
  return rep;
}

ConditionCheck check_oracle_equivalence(const VerifyOptions & opt)
{
  ConditionCheck c{"oracle_equivalence", true, 0.0, 1e-6,
                   "|F - F_quadrature| / max(1, F_quadrature); rotation part compared at 1e-12", {}};
  Sampler rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto & lim = opt.limits;
  double worst_f3 = 0.0;
  for (int i = 0; i < opt.samples; ++i) {
    const auto ts = rng.admissible(opt.r_max, lim.a_max);
    const double f = terminal_cost(ts, lim, Branch::toward, opt.cost).f;
    const auto o = terminal_cost_oracle(ts, lim);
    record(c, std::abs(f - o.f) / std::max(1.0, o.f), {ts.r, ts.theta, ts.v});
    const double f3 = std::abs(std::pow(ts.theta, 3)) / (3.0 * lim.omega_max);
    const double e3 = std::abs((*o.parts)[2] - f3) / std::max(1.0, f3);
    worst_f3 = std::max(worst_f3, e3);
    if (e3 > 1e-12) {
      c.passed = false;
      if (c.violations.size() < max_listed) { c.violations.push_back({ts.r, ts.theta, ts.v, e3}); }
    }
  }
  c.note += "; worst rotation-part error " + std::to_string(worst_f3);
  return c;
}

ConditionCheck check_gradient(const VerifyOptions & opt)
{
  ConditionCheck c{"gradient_finite_difference", true, 0.0, 1e-5,
                   "max_i |g_i - central_difference_i| / max(1, |g_i|), step 1e-6, sigma2 >= 1e-4", {}};
  Sampler rng(opt.seed ^ 0xc2b2ae3d27d4eb4fULL);
  const auto & lim = opt.limits;
  const double h = 1e-6;
  int taken = 0;
  while (taken < opt.samples) {
    const auto ts = rng.admissible(opt.r_max, lim.a_max);
    const double s2 = ts.v * ts.v + 2.0 * lim.a_max * ts.r;
    // keep the difference stencil inside the admissible region
    if (s2 < 1e-4 || ts.r < 2 * h || std::pow(ts.v + h, 2) > 2.0 * lim.a_max * (ts.r - h)) { continue; }
    ++taken;
    const auto g = terminal_cost_gradient(ts, lim, Branch::toward, opt.cost);
    auto F = [&](double r, double th, double v) { return terminal_cost({r, th, v}, lim, Branch::toward, opt.cost).f; };
    const double fd_r = (F(ts.r + h, ts.theta, ts.v) - F(ts.r - h, ts.theta, ts.v)) / (2 * h);
    const double fd_t = (F(ts.r, ts.theta + h, ts.v) - F(ts.r, ts.theta - h, ts.v)) / (2 * h);
    double fd_v = 0.0;
    if (ts.v >= h) {
      fd_v = (F(ts.r, ts.theta, ts.v + h) - F(ts.r, ts.theta, ts.v - h)) / (2 * h);
    } else {
      // one-sided second-order stencil at the v >= 0 edge
      fd_v = (-3 * F(ts.r, ts.theta, ts.v) + 4 * F(ts.r, ts.theta, ts.v + h) - F(ts.r, ts.theta, ts.v + 2 * h)) / (2 * h);
    }
    const double err = std::max({std::abs(fd_r - g.d_r) / std::max(1.0, std::abs(g.d_r)),
                                 std::abs(fd_t - g.d_theta) / std::max(1.0, std::abs(g.d_theta)),
                                 std::abs(fd_v - g.d_v) / std::max(1.0, std::abs(g.d_v))});
    record(c, err, {ts.r, ts.theta, ts.v});
  }
  return c;
}

StabilityReport run_verification(const VerifyOptions & opt)
{
  auto rep = verify_stability_conditions(opt);
  rep.checks.push_back(check_oracle_equivalence(opt));
  rep.checks.push_back(check_gradient(opt));
  return rep;
}

}  // namespace nhmpc
