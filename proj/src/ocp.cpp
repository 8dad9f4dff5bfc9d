#include "nhmpc/ocp.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nhmpc/aux_controller.hpp"
#include "nhmpc/errors.hpp"
#include "nhmpc/terminal_cost.hpp"
#include "nhmpc/terminal_geometry.hpp"

namespace nhmpc {

using Eigen::VectorXd;
using Triplets = std::vector<Eigen::Triplet<double>>;

void OcpConfig::validate() const
{
  if (horizon < 1) { throw ConfigError("OcpConfig: horizon must be >= 1"); }
  if (!(mpc_period > 0) || !(integrator_step > 0) || !std::isfinite(mpc_period)) {
    throw ConfigError("OcpConfig: mpc_period and integrator_step must be > 0");
  }
  const double ratio = mpc_period / integrator_step;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || std::round(ratio) < 1) {
    throw ConfigError("OcpConfig: mpc_period must be an integer multiple of integrator_step");
  }
  limits.validate();
  if (!(terminal_tolerance >= 0) || !(angle_smoothing >= 0) || !(norm_smoothing >= 0)) {
    throw ConfigError("OcpConfig: tolerances and smoothing must be >= 0");
  }
}

int OcpConfig::substeps() const { return static_cast<int>(std::round(mpc_period / integrator_step)); }

namespace {

Vec5 propagate(const Vec5 & x, const Vec2 & u, const OcpConfig & cfg)
{
  Vec5 s = x;
  for (int j = 0; j < cfg.substeps(); ++j) { s = rk4_step_raw(s, u, cfg.integrator_step); }
  return s;
}

Vec5 propagate(const Vec5 & x, const Vec2 & u, const OcpConfig & cfg, Mat57 & jac)
{
  Vec5 s = x;
  jac.setZero();
  jac.leftCols<5>().setIdentity();
  Mat57 step_jac;
  for (int j = 0; j < cfg.substeps(); ++j) {
    s = rk4_step_sensitivity(s, u, cfg.integrator_step, step_jac);
    Mat57 next = step_jac.leftCols<5>() * jac;
    next.rightCols<2>() += step_jac.rightCols<2>();
    jac = next;
  }
  return s;
}

double stage(const Vec5 & x) { return x.squaredNorm(); }

std::string node_error(const char * what, int k)
{
  std::ostringstream msg;
  msg << "OCP evaluation: non-finite " << what << " at node " << k;
  return msg.str();
}

}  // namespace

OcpProblem::OcpProblem(const State & x_init, const OcpConfig & cfg, Branch terminal_branch)
  : x_init_(x_init), cfg_(cfg)
{
  set_terminal_branch(terminal_branch);
  cfg_.validate();
  if (!x_init.is_finite()) { throw NumericalError("build_ocp: non-finite initial state"); }
}

OcpProblem build_ocp(const State & x_init, const OcpConfig & cfg, Branch terminal_branch)
{
  return OcpProblem(x_init, cfg, terminal_branch);
}

void OcpProblem::set_terminal_branch(Branch b)
{
  if (b != Branch::toward && b != Branch::away) {
    throw std::invalid_argument("OcpProblem: terminal branch must be toward or away");
  }
  branch_ = b;
}

Branch infer_terminal_branch(const OcpProblem & p, const VectorXd & w, Branch fallback)
{
  const State last = State::from_vec(w.segment<5>(p.state_index(p.horizon())));
  const auto m = classify_terminal(last, p.config().limits, 1e-6);
  if (m.member && (m.branch == Branch::toward || m.branch == Branch::away)) { return m.branch; }
  return fallback;
}

int OcpProblem::num_variables() const { return 5 * (cfg_.horizon + 1) + 2 * cfg_.horizon; }

int OcpProblem::num_terminal_equalities() const { return cfg_.terminal_tolerance > 0 ? 0 : 2; }

int OcpProblem::num_equalities() const { return 5 + 5 * cfg_.horizon + num_terminal_equalities(); }

int OcpProblem::num_inequalities() const { return 2 + (cfg_.terminal_tolerance > 0 ? 4 : 0); }

void OcpProblem::bounds(VectorXd & lower, VectorXd & upper) const
{
  const int n = num_variables();
  lower = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  upper = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int k = 0; k < cfg_.horizon; ++k) {
    const int j = control_index(k);
    lower[j] = -cfg_.limits.a_max;
    upper[j] = cfg_.limits.a_max;
    lower[j + 1] = -cfg_.limits.omega_max;
    upper[j + 1] = cfg_.limits.omega_max;
  }
}

std::vector<std::vector<int>> OcpProblem::separable_blocks() const
{
  std::vector<std::vector<int>> blocks;
  for (int k = 0; k < cfg_.horizon; ++k) {
    const int s = state_index(k);
    const int c = control_index(k);
    blocks.push_back({s, s + 1, s + 2, s + 3, s + 4, c, c + 1});
  }
  const int s = state_index(cfg_.horizon);
  blocks.push_back({s, s + 1, s + 2, s + 3, s + 4});
  return blocks;
}

VectorXd OcpProblem::initial_hessian_diagonal() const
{
  VectorXd d = VectorXd::Constant(num_variables(), 2.0 * cfg_.mpc_period);
  d.segment<5>(state_index(cfg_.horizon)).setOnes();
  for (int k = 0; k < cfg_.horizon; ++k) { d.segment<2>(control_index(k)).setConstant(1e-2); }
  return d;
}

double OcpProblem::smoothed_objective(const VectorXd & w, VectorXd * grad) const
{
  const int N = cfg_.horizon;
  const double dt = cfg_.mpc_period;
  double f = 0.0;
  if (grad != nullptr) { grad->setZero(num_variables()); }
  for (int k = 0; k < N; ++k) {
    const Vec5 x = w.segment<5>(state_index(k));
    f += dt * stage(x);
    if (grad != nullptr) { grad->segment<5>(state_index(k)) = 2.0 * dt * x; }
  }
  const Vec5 xn = w.segment<5>(state_index(N));
  const double sg = branch_sign();
  const double ct = std::cos(xn[2]);
  const double st = std::sin(xn[2]);
  // distance and speed toward the origin measured along the body axis
  const double rho = sg * (xn[0] * st - xn[1] * ct);
  const double vel = sg * (-xn[3] * st + xn[4] * ct);
  const double mu2 = cfg_.norm_smoothing * cfg_.norm_smoothing;
  const double rq = std::sqrt(rho * rho + mu2);
  const double vq = std::sqrt(vel * vel + mu2);
  const double r = 0.5 * (rho + rq);
  const double v = 0.5 * (vel + vq);
  if (r == 0.0 && v == 0.0) {
    const double th = xn[2];
    f += std::abs(th * th * th) / (3.0 * cfg_.limits.omega_max);
    if (grad != nullptr) { (*grad)[state_index(N) + 2] = th * std::abs(th) / cfg_.limits.omega_max; }
    return f;
  }
  const auto F = terminal_cost_smooth(r, xn[2], v, cfg_.limits, cfg_.angle_smoothing);
  f += F[0];
  if (grad != nullptr) {
    const double dr = F[1] * (rq > 0 ? 0.5 * (1.0 + rho / rq) : 0.0);
    const double dv = F[3] * (vq > 0 ? 0.5 * (1.0 + vel / vq) : 0.0);
    auto g = grad->segment<5>(state_index(N));
    g[0] = dr * sg * st;
    g[1] = -dr * sg * ct;
    g[2] = F[2] + dr * sg * (xn[0] * ct + xn[1] * st) - dv * sg * (xn[3] * ct + xn[4] * st);
    g[3] = -dv * sg * st;
    g[4] = dv * sg * ct;
  }
  return f;
}

void OcpProblem::evaluate(const VectorXd & w, bool derivatives, NlpEvaluation & out) const
{
  if (w.size() != num_variables()) { throw std::invalid_argument("OcpProblem::evaluate: wrong dimension"); }
  if (!derivatives || cfg_.derivatives == DerivativeMode::sensitivity) {
    evaluate_sensitivity(w, derivatives, out);
    return;
  }

  // dense central differences (debug mode)
  evaluate_sensitivity(w, false, out);
  const int n = num_variables();
  out.grad.resize(n);
  Triplets tc;
  Triplets tg;
  NlpEvaluation plus;
  NlpEvaluation minus;
  VectorXd wp = w;
  for (int i = 0; i < n; ++i) {
    const double step = 1e-6 * std::max(1.0, std::abs(w[i]));
    wp[i] = w[i] + step;
    evaluate_sensitivity(wp, false, plus);
    wp[i] = w[i] - step;
    evaluate_sensitivity(wp, false, minus);
    wp[i] = w[i];
    out.grad[i] = (plus.f - minus.f) / (2.0 * step);
    for (Eigen::Index r = 0; r < out.c.size(); ++r) {
      const double d = (plus.c[r] - minus.c[r]) / (2.0 * step);
      if (d != 0.0) { tc.emplace_back(r, i, d); }
    }
    for (Eigen::Index r = 0; r < out.g.size(); ++r) {
      const double d = (plus.g[r] - minus.g[r]) / (2.0 * step);
      if (d != 0.0) { tg.emplace_back(r, i, d); }
    }
  }
  out.jc.resize(out.c.size(), n);
  out.jc.setFromTriplets(tc.begin(), tc.end());
  out.jg.resize(out.g.size(), n);
  out.jg.setFromTriplets(tg.begin(), tg.end());
}

void OcpProblem::evaluate_sensitivity(const VectorXd & w, bool derivatives, NlpEvaluation & out) const
{
  const int N = cfg_.horizon;
  const int n = num_variables();
  const double a = cfg_.limits.a_max;
  const double eps = cfg_.terminal_tolerance;

  out.c.resize(num_equalities());
  out.g.resize(num_inequalities());
  Triplets tc;
  Triplets tg;
  if (derivatives) { tc.reserve(5 + 5 * N * 13 + 8); }

  out.f = smoothed_objective(w, derivatives ? &out.grad : nullptr);
  if (!std::isfinite(out.f)) { throw NumericalError(node_error("objective", N)); }

  out.c.head<5>() = w.segment<5>(0) - x_init_.vec();
  if (derivatives) {
    for (int i = 0; i < 5; ++i) { tc.emplace_back(i, i, 1.0); }
  }

  Mat57 jac;
  for (int k = 0; k < N; ++k) {
    const Vec5 x = w.segment<5>(state_index(k));
    const Vec2 u = w.segment<2>(control_index(k));
    if (!x.allFinite() || !u.allFinite()) { throw NumericalError(node_error("decision variable", k)); }
    const int row = 5 + 5 * k;
    const Vec5 next = derivatives ? propagate(x, u, cfg_, jac) : propagate(x, u, cfg_);
    if (!next.allFinite()) { throw NumericalError(node_error("shooting state", k)); }
    out.c.segment<5>(row) = next - w.segment<5>(state_index(k + 1));
    if (derivatives) {
      for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
          if (jac(i, j) != 0.0) { tc.emplace_back(row + i, state_index(k) + j, jac(i, j)); }
        }
        for (int j = 0; j < 2; ++j) {
          if (jac(i, 5 + j) != 0.0) { tc.emplace_back(row + i, control_index(k) + j, jac(i, 5 + j)); }
        }
        tc.emplace_back(row + i, state_index(k + 1) + i, -1.0);
      }
    }
  }

  const int b = state_index(N);
  const Vec5 xn = w.segment<5>(b);
  const double px = xn[0];
  const double pz = xn[1];
  const double th = xn[2];
  const double vx = xn[3];
  const double vz = xn[4];
  const double ct = std::cos(th);
  const double st = std::sin(th);

  // alignment with the body axis e_z = (-sin, cos): cross products V x e_z and r x e_z
  const double c1 = vx * ct + vz * st;
  const double c2 = px * ct + pz * st;
  const std::array<std::pair<int, double>, 3> d1{{{b + 2, -vx * st + vz * ct}, {b + 3, ct}, {b + 4, st}}};
  const std::array<std::pair<int, double>, 3> d2{{{b + 2, -px * st + pz * ct}, {b + 0, ct}, {b + 1, st}}};
  // moving toward the origin (v >= 0) and able to stop before it (v^2 <= 2 a rho)
  const double sg = branch_sign();
  const double q = -vx * st + vz * ct;
  const double s = -px * st + pz * ct;
  const double g1 = -sg * q;
  const double g2 = q * q + 2.0 * a * sg * s;
  const std::array<std::pair<int, double>, 3> dg1{{{b + 2, sg * c1}, {b + 3, sg * st}, {b + 4, -sg * ct}}};
  const std::array<std::pair<int, double>, 5> dg2{{{b, -2.0 * a * sg * st},
                                                   {b + 1, 2.0 * a * sg * ct},
                                                   {b + 2, -2.0 * q * c1 - 2.0 * a * sg * c2},
                                                   {b + 3, -2.0 * q * st},
                                                   {b + 4, 2.0 * q * ct}}};

  auto add = [&](Triplets & t, int row, const auto & entries, double sign) {
    if (!derivatives) { return; }
    for (const auto & [col, val] : entries) { t.emplace_back(row, col, sign * val); }
  };

  const int trow = 5 + 5 * N;
  int grow = 0;
  if (eps > 0) {
    out.g[0] = c1 - eps;
    out.g[1] = -c1 - eps;
    out.g[2] = c2 - eps;
    out.g[3] = -c2 - eps;
    add(tg, 0, d1, 1.0);
    add(tg, 1, d1, -1.0);
    add(tg, 2, d2, 1.0);
    add(tg, 3, d2, -1.0);
    grow = 4;
  } else {
    out.c[trow] = c1;
    out.c[trow + 1] = c2;
    add(tc, trow, d1, 1.0);
    add(tc, trow + 1, d2, 1.0);
  }
  out.g[grow] = g1 - eps;
  out.g[grow + 1] = g2 - eps;
  add(tg, grow, dg1, 1.0);
  add(tg, grow + 1, dg2, 1.0);
  if (!out.c.allFinite() || !out.g.allFinite()) { throw NumericalError(node_error("terminal constraint", N)); }

  if (derivatives) {
    out.jc.resize(num_equalities(), n);
    out.jc.setFromTriplets(tc.begin(), tc.end());
    out.jg.resize(num_inequalities(), n);
    out.jg.setFromTriplets(tg.begin(), tg.end());
    if (!out.grad.allFinite()) { throw NumericalError(node_error("objective gradient", N)); }
  }
}

VectorXd OcpProblem::pack(const std::vector<State> & states, const std::vector<Control> & controls) const
{
  const int N = cfg_.horizon;
  if (static_cast<int>(states.size()) != N + 1 || static_cast<int>(controls.size()) != N) {
    throw std::invalid_argument("OcpProblem::pack: expected N + 1 states and N controls");
  }
  VectorXd w(num_variables());
  for (int k = 0; k <= N; ++k) { w.segment<5>(state_index(k)) = states[k].vec(); }
  for (int k = 0; k < N; ++k) { w.segment<2>(control_index(k)) = controls[k].vec(); }
  return w;
}

std::vector<State> OcpProblem::unpack_states(const VectorXd & w) const
{
  std::vector<State> out;
  for (int k = 0; k <= cfg_.horizon; ++k) { out.push_back(State::from_vec(w.segment<5>(state_index(k)))); }
  return out;
}

std::vector<Control> OcpProblem::unpack_controls(const VectorXd & w) const
{
  std::vector<Control> out;
  for (int k = 0; k < cfg_.horizon; ++k) {
    const Vec2 u = w.segment<2>(control_index(k));
    out.push_back({u[0], u[1]});
  }
  return out;
}

double OcpProblem::exact_objective(const VectorXd & w) const
{
  const int N = cfg_.horizon;
  double f = 0.0;
  for (int k = 0; k < N; ++k) { f += cfg_.mpc_period * stage(w.segment<5>(state_index(k))); }
  const State xn = State::from_vec(w.segment<5>(state_index(N)));
  const double r = xn.r();
  const double v = xn.speed();
  if (r == 0.0 && v == 0.0) {
    f += std::abs(std::pow(xn.theta, 3)) / (3.0 * cfg_.limits.omega_max);
  } else {
    f += terminal_cost_smooth(r, xn.theta, v, cfg_.limits, 0.0)[0];
  }
  return f;
}

double OcpProblem::terminal_violation(const VectorXd & w) const
{
  NlpEvaluation ev;
  evaluate_sensitivity(w, false, ev);
  double v = 0.0;
  const int trow = 5 + 5 * cfg_.horizon;
  for (int i = trow; i < num_equalities(); ++i) { v = std::max(v, std::abs(ev.c[i])); }
  for (Eigen::Index i = 0; i < ev.g.size(); ++i) { v = std::max(v, ev.g[i]); }
  return v;
}

double OcpProblem::max_violation(const VectorXd & w) const
{
  NlpEvaluation ev;
  evaluate_sensitivity(w, false, ev);
  double v = ev.c.cwiseAbs().maxCoeff();
  if (ev.g.size() > 0) { v = std::max(v, ev.g.maxCoeff()); }
  VectorXd lo;
  VectorXd hi;
  bounds(lo, hi);
  for (int i = 0; i < num_variables(); ++i) { v = std::max({v, lo[i] - w[i], w[i] - hi[i]}); }
  return v;
}

nlohmann::json OcpProblem::dump(const VectorXd & w) const
{
  NlpEvaluation ev;
  evaluate(w, true, ev);
  auto pattern = [](const SparseMatrix & m) {
    nlohmann::json rows = nlohmann::json::array();
    nlohmann::json cols = nlohmann::json::array();
    for (int k = 0; k < m.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
        rows.push_back(it.row());
        cols.push_back(it.col());
      }
    }
    return nlohmann::json{{"rows", rows}, {"cols", cols}, {"nnz", m.nonZeros()}};
  };
  nlohmann::json j;
  j["num_variables"] = num_variables();
  j["num_equalities"] = num_equalities();
  j["num_inequalities"] = num_inequalities();
  j["horizon"] = cfg_.horizon;
  j["terminal_branch"] = std::string(to_string(branch_));
  j["equality_jacobian"] = pattern(ev.jc);
  j["inequality_jacobian"] = pattern(ev.jg);
  j["objective"] = ev.f;
  j["w"] = std::vector<double>(w.data(), w.data() + w.size());
  return j;
}

NlpEvaluation eval_cost_and_derivatives(const OcpProblem & p, const VectorXd & w)
{
  NlpEvaluation ev;
  p.evaluate(w, true, ev);
  return ev;
}

VectorXd aux_warm_start(const OcpProblem & p)
{
  const auto & cfg = p.config();
  const Branch strategy = preferred_strategy(p.initial_state());
  AuxOptions opt;
  opt.step = cfg.mpc_period;
  std::vector<State> states{p.initial_state()};
  std::vector<Control> controls;
  for (int k = 0; k < cfg.horizon; ++k) {
    const Control u = aux_control(states.back(), cfg.limits, strategy, opt);
    controls.push_back(u);
    states.push_back(State::from_vec(propagate(states.back().vec(), u.vec(), cfg)));
  }
  return p.pack(states, controls);
}

VectorXd warm_start_from(const OcpProblem & p, const Trajectory & rollout)
{
  if (static_cast<int>(rollout.controls.size()) != p.horizon()) {
    throw std::invalid_argument("warm_start_from: rollout length differs from the horizon");
  }
  return p.pack(rollout.states, rollout.controls);
}

VectorXd warm_start_from(const OcpProblem & p, const OcpSolution & prev, WarmTail tail)
{
  const auto & cfg = p.config();
  const int N = cfg.horizon;
  if (static_cast<int>(prev.states.size()) != N + 1 || static_cast<int>(prev.controls.size()) != N) {
    throw std::invalid_argument("warm_start_from: previous solution has a different horizon");
  }
  std::vector<State> states(prev.states.begin() + 1, prev.states.end());
  std::vector<Control> controls(prev.controls.begin() + 1, prev.controls.end());
  const State & last = prev.states.back();
  if (tail == WarmTail::duplicate) {
    states.push_back(last);
    controls.push_back(prev.controls.back());
  } else {
    const auto m = classify_terminal(last, cfg.limits, 1e-6);
    const Branch strategy = m.branch == Branch::away ? Branch::away : Branch::toward;
    AuxOptions opt;
    opt.step = cfg.mpc_period;
    const Control u = aux_control(last, cfg.limits, strategy, opt);
    controls.push_back(u);
    states.push_back(State::from_vec(propagate(last.vec(), u.vec(), cfg)));
  }

  // the plant wraps theta; keep the prediction on the same branch of the angle
  const double turns = std::round((p.initial_state().theta - states.front().theta) / (2.0 * std::numbers::pi));
  if (turns != 0.0) {
    for (auto & s : states) { s.theta += turns * 2.0 * std::numbers::pi; }
  }
  return p.pack(states, controls);
}

Multipliers shift_multipliers(const OcpProblem & p, const OcpSolution & prev)
{
  Multipliers m;
  const int N = p.horizon();
  if (prev.lambda.size() != p.num_equalities() || prev.mu.size() != p.num_inequalities()) { return m; }
  m.lambda = prev.lambda;
  m.mu = prev.mu;
  m.lambda.head<5>() = -prev.lambda.segment<5>(5);
  for (int k = 0; k + 1 < N; ++k) { m.lambda.segment<5>(5 + 5 * k) = prev.lambda.segment<5>(5 + 5 * (k + 1)); }
  return m;
}

OcpSolution solve_ocp(const OcpProblem & p, const VectorXd & w0, const SolverConfig & cfg,
                      const std::string & backend, const Multipliers * warm)
{
  const auto solver = select_backend(backend);
  SolveResult res = solver(p, w0, cfg, warm);
  OcpSolution sol;
  sol.outcome = res.outcome;
  sol.w = res.w;
  sol.lambda = res.lambda;
  sol.mu = res.mu;
  sol.states = p.unpack_states(res.w);
  sol.controls = p.unpack_controls(res.w);
  if (res.best_feasible.size() == p.num_variables()) {
    const Vec2 u = res.best_feasible.segment<2>(p.control_index(0));
    sol.best_feasible_first = Control{u[0], u[1]};
    sol.best_feasible = res.best_feasible;
  }
  if (res.w.allFinite()) {
    sol.objective = p.exact_objective(res.w);
    NlpEvaluation ev;
    p.evaluate(res.w, false, ev);
    sol.max_defect = ev.c.segment(5, 5 * p.horizon()).cwiseAbs().maxCoeff();
    sol.max_terminal_violation = p.terminal_violation(res.w);
    sol.max_violation = p.max_violation(res.w);
  }
  return sol;
}

}  // namespace nhmpc
