// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "nhmpc/aux_controller.hpp"
#include "nhmpc/mpc.hpp"
#include "nhmpc/ocp.hpp"
#include "nhmpc/stability.hpp"
#include "nhmpc/terminal_cost.hpp"

using namespace nhmpc;

namespace {

struct Verdict
{
  bool pass{true};
  std::ostringstream detail;

  void require(bool ok, const std::string & what)
  {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const AuxPhase * find_phase(const std::vector<AuxPhase> & phases, PhaseKind k)
{
  for (const auto & p : phases) {
    if (p.kind == k) { return &p; }
  }
  return nullptr;
}

void forward_from_corner(Verdict & v)
{
  const auto t0 = Clock::now();
  const InputLimits lim;
  const double h = 0.1;
  const Trajectory traj = aux_rollout(State{-4, 4, 0, 0, 0}, lim, Branch::toward, h, 170);
  const auto phases = detect_phases(traj);
  const double elapsed = seconds_since(t0);

  const std::pair<PhaseKind, double> ends[] = {{PhaseKind::rotate_to_set, 6.0},
                                               {PhaseKind::accelerate, 8.0},
                                               {PhaseKind::decelerate, 10.0},
                                               {PhaseKind::rotate_to_zero, 16.0}};
  for (const auto & [kind, t_end] : ends) {
    const AuxPhase * p = find_phase(phases, kind);
    v.require(p != nullptr, std::string(to_string(kind)) + " missing");
    if (p != nullptr) {
      v.detail << " " << to_string(kind) << "=" << p->t_end;
      v.require(std::abs(p->t_end - t_end) <= h + 1e-9, std::string(to_string(kind)) + " boundary");
    }
  }
  const double norm = traj.states.back().vec().norm();
  v.detail << " |x_end|=" << norm << " runtime=" << elapsed << "s";
  v.require(norm <= 1e-3, "final norm");
  v.require(elapsed < 1.0, "runtime");
}

void report_check(Verdict & v, const ConditionCheck & c, double elapsed, double budget)
{
  v.detail << " " << c.name << " worst=" << c.worst << " tol=" << c.tolerance << " runtime=" << elapsed << "s";
  v.require(c.passed, c.name);
  v.require(elapsed < budget, "runtime");
}

void oracle(Verdict & v)
{
  VerifyOptions opt;
  opt.samples = 10000;
  const auto t0 = Clock::now();
  const ConditionCheck c = check_oracle_equivalence(opt);
  report_check(v, c, seconds_since(t0), 10.0);
}

void gradient(Verdict & v)
{
  VerifyOptions opt;
  opt.samples = 1000;
  const auto t0 = Clock::now();
  const ConditionCheck c = check_gradient(opt);
  report_check(v, c, seconds_since(t0), 5.0);
}

void lyapunov(Verdict & v)
{
  VerifyOptions opt;
  opt.samples = 1000;
  const auto t0 = Clock::now();
  const StabilityReport rep = verify_stability_conditions(opt);
  const double elapsed = seconds_since(t0);
  for (const char * name : {"SC1_terminal_set", "SC2_stage_cost", "SC3_terminal_cost", "SC5_lyapunov", "SC5_invariance"}) {
    const ConditionCheck * c = rep.find(name);
    v.require(c != nullptr && c->passed, name);
    if (c != nullptr && c->name == "SC5_lyapunov") { v.detail << " worst |dF/dt+L|=" << c->worst; }
  }
  v.detail << " runtime=" << elapsed << "s";
  v.require(elapsed < 5.0, "runtime");
}

void switching_times(Verdict & v)
{
  const InputLimits lim;
  double worst_rest = 0, worst_edge = 0;
  for (double r = 1e-6; r <= 1e3; r *= std::pow(10.0, 0.25)) {
    const auto ts = lemma1_timestamps(r, 0.0, 0.3, lim);
    const double t1 = std::sqrt(r / lim.a_max);
    worst_rest = std::max({worst_rest, std::abs(ts.t1 - t1) / std::max(1.0, t1),
                           std::abs(ts.t2 - 2 * t1) / std::max(1.0, t1)});
    const auto edge = lemma1_timestamps(r, std::sqrt(2 * lim.a_max * r), 0.3, lim);
    worst_edge = std::max(worst_edge, std::abs(edge.t1));
  }
  v.detail << " worst rest error=" << worst_rest << " worst boundary t1=" << worst_edge;
  v.require(worst_rest <= 1e-10, "rest timestamps");
  v.require(worst_edge <= 1e-10, "boundary t1");
}

void closed_loop_grid(Verdict & v)
{
  MpcConfig cfg;
  int converged = 0;
  double worst_terminal = 0, total = 0;
  bool bounds = true;
  for (double x : {-4.0, 0.0, 4.0}) {
    for (double z : {-4.0, 0.0, 4.0}) {
      if (x == 0 && z == 0) { continue; }
      const auto t0 = Clock::now();
      const MpcTrace trace = run_mpc(State{x, z, 0, 0, 0}, cfg);
      total += seconds_since(t0);
      const State & s = trace.final_state;
      const bool ok = trace.status == MpcStatus::converged && s.x * s.x + s.z * s.z < cfg.epsilon_r
                      && trace.final_time <= cfg.max_sim_time;
      converged += ok ? 1 : 0;
      if (!ok) { v.detail << " (" << x << "," << z << ") " << to_string(trace.status); }
      for (const auto & r : trace.records) {
        bounds = bounds && std::abs(r.control.a) <= std::sqrt(2.0) && std::abs(r.control.omega) <= std::numbers::pi / 8;
        if (r.status == SolveStatus::optimal) { worst_terminal = std::max(worst_terminal, r.terminal_violation); }
      }
    }
  }
  v.detail << " converged=" << converged << "/8 worst terminal violation=" << worst_terminal
           << " runtime=" << total << "s";
  v.require(converged == 8, "convergence");
  v.require(bounds, "control bounds");
  v.require(worst_terminal <= 1e-6, "terminal violation");
}

void aux_feasibility(Verdict & v)
{
  std::mt19937_64 rng(20240417);
  std::uniform_real_distribution<double> unit(0, 1), ang(-std::numbers::pi, std::numbers::pi);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const double r = 10.0 * std::sqrt(unit(rng));
    const double phi = ang(rng);
    const State s0{r * std::cos(phi), r * std::sin(phi), ang(rng), 0, 0};
    const OcpProblem p = build_ocp(s0, OcpConfig{});
    const Eigen::VectorXd w = aux_warm_start(p);
    const auto xn = p.unpack_states(w).back();
    const auto m = classify_terminal(xn, InputLimits{}, 1e-6);
    // the problem targets the branch the rollout ends on
    OcpProblem q = build_ocp(s0, OcpConfig{}, m.branch == Branch::away ? Branch::away : Branch::toward);
    worst = std::max(worst, q.max_violation(w));
    if (q.max_violation(w) > 1e-6) { v.detail << " start " << i << " violation " << q.max_violation(w); }
  }
  v.detail << " worst violation=" << worst;
  v.require(worst <= 1e-6, "rollout feasibility");
}

void reverse_strategy(Verdict & v)
{
  const InputLimits lim;
  const double h = 0.1;
  const Trajectory traj = aux_rollout(State{0, -4, 0, 0, 0}, lim, Branch::away, h, 300);
  const auto phases = detect_phases(traj);
  const double t_move = std::sqrt(4 / lim.a_max);
  const std::pair<PhaseKind, double> durations[] = {{PhaseKind::rotate_to_set, 8.0},
                                                    {PhaseKind::accelerate, t_move},
                                                    {PhaseKind::decelerate, t_move},
                                                    {PhaseKind::rotate_to_zero, 8.0}};
  for (const auto & [kind, d] : durations) {
    const AuxPhase * p = find_phase(phases, kind);
    v.require(p != nullptr && std::abs(p->duration() - d) <= h + 1e-9, std::string(to_string(kind)) + " duration");
    if (p != nullptr) { v.detail << " " << to_string(kind) << "=" << p->duration(); }
  }
  // accelerating away from the origin side means negative thrust along the body axis
  const AuxPhase * acc = find_phase(phases, PhaseKind::accelerate);
  if (acc != nullptr) {
    const auto k = static_cast<std::size_t>(std::lround(acc->t_start / h));
    v.require(k < traj.controls.size() && traj.controls[k].a < 0, "reversed thrust");
  }
  const double norm = traj.states.back().vec().norm();
  v.detail << " |x_end|=" << norm;
  v.require(norm <= 1e-6, "final norm");

  // once inside, the state stays on the away branch until it reaches the origin
  bool entered = false, invariant = true;
  for (const auto & s : traj.states) {
    const auto m = classify_terminal(s, lim, 1e-6);
    if (m.member && m.branch == Branch::away) { entered = true; }
    if (entered) { invariant = invariant && m.member && (m.branch == Branch::away || m.branch == Branch::origin); }
  }
  v.require(entered, "away branch entered");
  v.require(invariant, "away branch invariance");

  VerifyOptions opt;
  opt.samples = 200;
  const StabilityReport rep = verify_stability_conditions(opt);
  const ConditionCheck * c = rep.find("SC5_invariance");
  v.require(c != nullptr && c->passed, "sampled invariance");
}

}  // namespace

int main()
{
  const std::pair<const char *, std::function<void(Verdict &)>> criteria[] = {
      {"AC-1 forward auxiliary simulation", forward_from_corner},
      {"AC-2 closed-form terminal cost vs quadrature", oracle},
      {"AC-3 terminal cost gradient", gradient},
      {"AC-4 Lyapunov identities and certification report", lyapunov},
      {"AC-5 in-set switching times", switching_times},
      {"AC-6 closed-loop NMPC grid", closed_loop_grid},
      {"AC-7 auxiliary rollout is a feasible OCP point", aux_feasibility},
      {"AC-8 reverse strategy and away-branch invariance", reverse_strategy},
  };
  int failed = 0;
  for (const auto & [name, run] : criteria) {
    Verdict v;
    try {
      run(v);
    } catch (const std::exception & e) {
      v.pass = false;
      v.detail << " exception: " << e.what();
    }
    std::printf("%s %s:%s\n", v.pass ? "PASS" : "FAIL", name, v.detail.str().c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
