#include "nhmpc/mpc.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "nhmpc/aux_controller.hpp"
#include "nhmpc/errors.hpp"

namespace nhmpc {

void MpcConfig::validate() const
{
  ocp.validate();
  solver.validate();
  if (!(epsilon_r > 0) || !std::isfinite(epsilon_r)) { throw ConfigError("MpcConfig: epsilon_r must be > 0"); }
  if (!(max_sim_time > 0) || !std::isfinite(max_sim_time)) {
    throw ConfigError("MpcConfig: max_sim_time must be > 0");
  }
  select_backend(backend);
}

std::string_view to_string(MpcStatus s)
{
  switch (s) {
    case MpcStatus::converged: return "converged";
    case MpcStatus::time_limit: return "time-limit";
    case MpcStatus::solver_chain_failure: return "solver-chain-failure";
  }
  return "unknown";
}

std::string_view to_string(ControlSource s)
{
  switch (s) {
    case ControlSource::optimal: return "optimal";
    case ControlSource::best_feasible: return "best-feasible";
    case ControlSource::auxiliary: return "auxiliary";
  }
  return "unknown";
}

double MpcTrace::total_solve_time() const
{
  double total = 0;
  for (const auto & r : records) { total += r.solve_time; }
  return total;
}

nlohmann::json MpcTrace::summary() const
{
  int optimal = 0, fallback = 0, aux = 0, outer = 0, inner = 0;
  double worst_terminal = 0, max_solve = 0;
  for (const auto & r : records) {
    if (r.source == ControlSource::optimal) { ++optimal; }
    if (r.source == ControlSource::best_feasible) { ++fallback; }
    if (r.source == ControlSource::auxiliary) { ++aux; }
    if (r.status == SolveStatus::optimal) { worst_terminal = std::max(worst_terminal, r.terminal_violation); }
    outer += r.outer_iterations;
    inner += r.inner_iterations;
    max_solve = std::max(max_solve, r.solve_time);
  }
  const auto & s = final_state;
  return {
    {"status", std::string(to_string(status))},
    {"message", message},
    {"iterations", iterations()},
    {"final_time", final_time},
    {"final_state", {{"x", s.x}, {"z", s.z}, {"theta", s.theta}, {"vx", s.vx}, {"vz", s.vz}}},
    {"final_r2", s.x * s.x + s.z * s.z},
    {"final_speed", s.speed()},
    {"controls", {{"optimal", optimal}, {"best_feasible", fallback}, {"auxiliary", aux}}},
    {"solver", {{"outer_iterations", outer}, {"inner_iterations", inner}}},
    {"max_terminal_violation_optimal", worst_terminal},
    {"timing", {{"total_solve_s", total_solve_time()}, {"max_solve_s", max_solve}}},
  };
}

namespace {

State plant_step(const State & s, const Control & u, const OcpConfig & cfg)
{
  State next = s;
  for (int i = 0; i < cfg.substeps(); ++i) { next = rk4_step(next, u, cfg.integrator_step, cfg.limits); }
  return next;
}

}  // namespace

MpcTrace run_mpc(const State & x0, const MpcConfig & cfg)
{
  cfg.validate();
  if (!x0.is_finite()) { throw NumericalError("run_mpc: non-finite initial state"); }

  MpcTrace trace;
  const double delta = cfg.ocp.mpc_period;
  const int max_steps = static_cast<int>(std::floor(cfg.max_sim_time / delta + 1e-9));
  AuxOptions aux_opt;
  aux_opt.step = delta;

  State x = x0;
  x.theta = wrap_angle(x.theta);
  std::optional<OcpSolution> prev;
  Branch prev_branch = Branch::toward;

  for (int k = 0;; ++k) {
    const double t = k * delta;
    trace.final_state = x;
    trace.final_time = t;
    if (x.x * x.x + x.z * x.z < cfg.epsilon_r) {
      trace.status = MpcStatus::converged;
      return trace;
    }
    if (k >= max_steps) {
      trace.status = MpcStatus::time_limit;
      return trace;
    }

    OcpProblem p = build_ocp(x, cfg.ocp);
    Eigen::VectorXd w0;
    Multipliers warm;
    const bool reuse = prev && prev->w.allFinite();
    if (reuse) {
      w0 = warm_start_from(p, *prev, cfg.tail);
      warm = shift_multipliers(p, *prev);
    } else {
      w0 = aux_warm_start(p);
    }
    const Branch branch = infer_terminal_branch(p, w0, reuse ? prev_branch : preferred_strategy(x));
    p.set_terminal_branch(branch);
    if (reuse && branch != prev_branch) { warm.mu.resize(0); }

    MpcRecord rec;
    rec.t = t;
    rec.state = x;
    const auto start = std::chrono::steady_clock::now();
    std::optional<OcpSolution> sol;
    try {
      sol = solve_ocp(p, w0, cfg.solver, cfg.backend, reuse && warm.lambda.size() > 0 ? &warm : nullptr);
    } catch (const NumericalError & e) {
      trace.message = e.what();
    }
    rec.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::optional<Control> u;
    if (sol) {
      rec.status = sol->outcome.status;
      rec.objective = sol->objective;
      rec.outer_iterations = sol->outcome.outer_iterations;
      rec.inner_iterations = sol->outcome.inner_iterations;
      rec.max_violation = sol->max_violation;
      rec.terminal_violation = sol->max_terminal_violation;
      if (sol->outcome.status == SolveStatus::optimal && sol->controls.front().is_finite()) {
        u = sol->controls.front();
        rec.source = ControlSource::optimal;
      } else if (sol->best_feasible_first && sol->best_feasible_first->is_finite()) {
        u = sol->best_feasible_first;
        rec.source = ControlSource::best_feasible;
        // continue from the plan that was applied
        sol->w = sol->best_feasible;
        sol->states = p.unpack_states(sol->w);
        sol->controls = p.unpack_controls(sol->w);
      }
    } else {
      rec.status = SolveStatus::numerical_failure;
    }
    if (!u) {
      u = aux_control(x, cfg.ocp.limits, preferred_strategy(x), aux_opt);
      rec.source = ControlSource::auxiliary;
    }
    if (!u->is_finite()) {
      trace.status = MpcStatus::solver_chain_failure;
      trace.message = "no finite control at t = " + std::to_string(t);
      return trace;
    }
    rec.control = cfg.ocp.limits.clip(*u);
    trace.records.push_back(rec);
    if (cfg.on_record) { cfg.on_record(rec); }

    if (sol && sol->w.allFinite()) {
      prev = std::move(sol);
      prev_branch = branch;
    } else {
      prev.reset();
    }
    x = plant_step(x, rec.control, cfg.ocp);
  }
}

}  // namespace nhmpc
