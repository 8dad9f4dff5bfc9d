#include "nhmpc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nhmpc/errors.hpp"
#include "nhmpc/stability.hpp"
#include "nhmpc/terminal_cost.hpp"

namespace nhmpc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ExperimentKind k)
{
  switch (k) {
    case ExperimentKind::forward_aux: return "forward-aux";
    case ExperimentKind::nmpc_single: return "nmpc-single";
    case ExperimentKind::nmpc_grid: return "nmpc-grid";
    case ExperimentKind::verify: return "verify";
  }
  return "unknown";
}

ExperimentKind experiment_from_string(const std::string & s)
{
  if (s == "forward-aux" || s == "forward") { return ExperimentKind::forward_aux; }
  if (s == "nmpc-single" || s == "nmpc") { return ExperimentKind::nmpc_single; }
  if (s == "nmpc-grid" || s == "grid") { return ExperimentKind::nmpc_grid; }
  if (s == "verify") { return ExperimentKind::verify; }
  throw ConfigError("unknown experiment '" + s + "'");
}

const std::vector<std::string> & trace_columns()
{
  static const std::vector<std::string> cols{"t", "x", "z", "theta", "vx", "vz", "a", "omega", "objective", "status"};
  return cols;
}

void ExperimentConfig::validate() const
{
  mpc_config().validate();
  if (jobs < 1) { throw ConfigError("jobs must be >= 1"); }
  if (samples < 1) { throw ConfigError("samples must be >= 1"); }
  if (!std::isfinite(x0[0]) || !std::isfinite(x0[1])) { throw ConfigError("x0 must be finite"); }
  if (!(cost_mutation > 0) || !std::isfinite(cost_mutation)) { throw ConfigError("cost_mutation must be > 0"); }
  if (strategy && *strategy != Branch::toward && *strategy != Branch::away) {
    throw ConfigError("strategy must be toward, away or auto");
  }
  for (const auto & g : grid) {
    if (!std::isfinite(g[0]) || !std::isfinite(g[1])) { throw ConfigError("grid starts must be finite"); }
  }
}

MpcConfig ExperimentConfig::mpc_config() const
{
  MpcConfig m;
  m.ocp.horizon = horizon;
  m.ocp.mpc_period = delta;
  m.ocp.integrator_step = h;
  m.ocp.limits = limits;
  m.ocp.terminal_tolerance = eps_f;
  m.epsilon_r = eps_r;
  m.max_sim_time = max_sim_time;
  m.backend = backend;
  return m;
}

std::vector<std::array<double, 2>> ExperimentConfig::grid_starts() const
{
  if (!grid.empty()) { return grid; }
  std::vector<std::array<double, 2>> g;
  for (double x : {-4.0, 0.0, 4.0}) {
    for (double z : {-4.0, 0.0, 4.0}) {
      if (x != 0.0 || z != 0.0) { g.push_back({x, z}); }
    }
  }
  return g;
}

json ExperimentConfig::to_json() const
{
  json grid_j = json::array();
  for (const auto & g : grid_starts()) { grid_j.push_back({g[0], g[1]}); }
  return {
    {"experiment", to_string(experiment)},
    {"a_max", limits.a_max},
    {"omega_max", limits.omega_max},
    {"x0", {x0[0], x0[1]}},
    {"grid", grid_j},
    {"h", h},
    {"delta", delta},
    {"horizon", horizon},
    {"eps_r", eps_r},
    {"eps_f", eps_f},
    {"max_sim_time", max_sim_time},
    {"out", out_dir},
    {"seed", seed},
    {"jobs", jobs},
    {"verbose", verbose},
    {"backend", backend},
    {"strategy", strategy ? std::string(nhmpc::to_string(*strategy)) : std::string("auto")},
    {"samples", samples},
    {"cost_mutation", cost_mutation},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json & j, const ExperimentConfig & base)
{
  if (!j.is_object()) { throw ConfigError("config must be a JSON object"); }
  ExperimentConfig c = base;
  try {
    for (const auto & [key, val] : j.items()) {
      if (key == "experiment") {
        c.experiment = experiment_from_string(val.get<std::string>());
      } else if (key == "a_max") {
        c.limits.a_max = val.get<double>();
      } else if (key == "omega_max") {
        c.limits.omega_max = val.get<double>();
      } else if (key == "x0") {
        c.x0 = val.get<std::array<double, 2>>();
      } else if (key == "grid") {
        c.grid = val.get<std::vector<std::array<double, 2>>>();
      } else if (key == "h") {
        c.h = val.get<double>();
      } else if (key == "delta") {
        c.delta = val.get<double>();
      } else if (key == "horizon") {
        c.horizon = val.get<int>();
      } else if (key == "eps_r") {
        c.eps_r = val.get<double>();
      } else if (key == "eps_f") {
        c.eps_f = val.get<double>();
      } else if (key == "max_sim_time") {
        c.max_sim_time = val.get<double>();
      } else if (key == "out") {
        c.out_dir = val.get<std::string>();
      } else if (key == "seed") {
        c.seed = val.get<std::uint64_t>();
      } else if (key == "jobs") {
        c.jobs = val.get<int>();
      } else if (key == "verbose") {
        c.verbose = val.get<int>();
      } else if (key == "backend") {
        c.backend = val.get<std::string>();
      } else if (key == "strategy") {
        const auto s = val.get<std::string>();
        if (s == "auto") {
          c.strategy.reset();
        } else if (s == "toward") {
          c.strategy = Branch::toward;
        } else if (s == "away") {
          c.strategy = Branch::away;
        } else {
          throw ConfigError("strategy must be toward, away or auto");
        }
      } else if (key == "samples") {
        c.samples = val.get<int>();
      } else if (key == "cost_mutation") {
        c.cost_mutation = val.get<double>();
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception & e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

namespace {

void write_row(std::ostream & os, double t, const State & s, const Control & u, double objective,
               const std::string & status)
{
  os << t << ',' << s.x << ',' << s.z << ',' << s.theta << ',' << s.vx << ',' << s.vz << ',' << u.a << ','
     << u.omega << ',' << objective << ',' << status << '\n';
}

void write_header(std::ostream & os)
{
  const auto & cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) { os << (i ? "," : "") << cols[i]; }
  os << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
}

json state_json(const State & s) { return {{"x", s.x}, {"z", s.z}, {"theta", s.theta}, {"vx", s.vx}, {"vz", s.vz}}; }

void write_json(const fs::path & path, const json & j)
{
  std::ofstream f(path);
  if (!f) { throw std::runtime_error("cannot write " + path.string()); }
  f << j.dump(2) << '\n';
}

fs::path prepare_out(const ExperimentConfig & cfg)
{
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_json(out / "config.json", cfg.to_json());
  return out;
}

}  // namespace

void write_trace_csv(std::ostream & os, const Trajectory & traj, const std::string & status)
{
  write_header(os);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const Control u = k < traj.controls.size() ? traj.controls[k] : Control{};
    write_row(os, traj.t[k], traj.states[k], u, stage_cost(traj.states[k]), status);
  }
}

void write_trace_csv(std::ostream & os, const MpcTrace & trace)
{
  write_header(os);
  for (const auto & r : trace.records) {
    write_row(os, r.t, r.state, r.control, r.objective, to_string(r.status));
  }
  write_row(os, trace.final_time, trace.final_state, Control{}, 0.0, std::string(to_string(trace.status)));
}

std::vector<TraceRow> read_trace_csv(std::istream & is)
{
  std::string line;
  if (!std::getline(is, line)) { throw std::runtime_error("trace CSV: empty input"); }
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) { header.push_back(cell); }
  }
  std::vector<std::string> missing;
  for (const auto & c : trace_columns()) {
    if (std::find(header.begin(), header.end(), c) == header.end()) { missing.push_back(c); }
  }
  if (!missing.empty()) {
    std::string msg = "trace CSV: missing columns:";
    for (const auto & m : missing) { msg += " " + m; }
    throw std::runtime_error(msg);
  }
  std::vector<int> idx;
  for (const auto & c : trace_columns()) {
    idx.push_back(static_cast<int>(std::find(header.begin(), header.end(), c) - header.begin()));
  }

  std::vector<TraceRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) { continue; }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) { cells.push_back(cell); }
    if (cells.size() != header.size()) {
      throw std::runtime_error("trace CSV: line " + std::to_string(lineno) + " has " + std::to_string(cells.size())
                               + " fields, expected " + std::to_string(header.size()));
    }
    auto num = [&](int i) {
      try {
        return std::stod(cells[idx[i]]);
      } catch (const std::exception &) {
        throw std::runtime_error("trace CSV: bad number on line " + std::to_string(lineno));
      }
    };
    TraceRow r;
    r.t = num(0);
    r.state = {num(1), num(2), num(3), num(4), num(5)};
    r.control = {num(6), num(7)};
    r.objective = num(8);
    r.status = cells[idx[9]];
    rows.push_back(r);
  }
  return rows;
}

std::string damping_half_plane(const MpcTrace & trace, double radius)
{
  std::vector<State> states;
  for (const auto & r : trace.records) { states.push_back(r.state); }
  states.push_back(trace.final_state);
  auto first = std::find_if(states.begin(), states.end(), [&](const State & s) { return s.r() < radius; });
  if (first == states.end()) { return "none"; }
  const double tol = 1e-6;
  bool pos = true, neg = true;
  for (auto it = first; it != states.end(); ++it) {
    pos = pos && it->x >= -tol;
    neg = neg && it->x <= tol;
  }
  if (pos && !neg) { return "x>=0"; }
  if (neg && !pos) { return "x<=0"; }
  return pos ? "x=0" : "both";
}

json forward_summary(const Trajectory & traj, const std::vector<AuxPhase> & phases, Branch strategy)
{
  json ph = json::array();
  for (const auto & p : phases) {
    ph.push_back({{"kind", std::string(to_string(p.kind))},
                  {"t_start", p.t_start},
                  {"t_end", p.t_end},
                  {"duration", p.duration()}});
  }
  const State & last = traj.states.back();
  return {
    {"strategy", std::string(to_string(strategy))},
    {"phases", ph},
    {"samples", traj.states.size()},
    {"final_time", traj.t.back()},
    {"final_state", state_json(last)},
    {"final_norm", last.vec().norm()},
  };
}

int cmd_forward(const ExperimentConfig & cfg, std::ostream & err)
{
  try {
    cfg.validate();
    const fs::path out = prepare_out(cfg);
    const State s0{cfg.x0[0], cfg.x0[1], 0, 0, 0};
    const Branch strategy = cfg.strategy ? *cfg.strategy : preferred_strategy(s0);

    double plan_end = 0.0;
    for (const auto & p : phase_plan(s0, cfg.limits, strategy)) {
      if (std::isfinite(p.t_end)) { plan_end = std::max(plan_end, p.t_end); }
    }
    const int steps = static_cast<int>(std::ceil(plan_end / cfg.h - 1e-9)) + static_cast<int>(std::round(1.0 / cfg.h));
    const Trajectory traj = aux_rollout(s0, cfg.limits, strategy, cfg.h, steps);
    Trajectory wrapped = traj;
    for (auto & s : wrapped.states) { s.theta = wrap_angle(s.theta); }

    std::ofstream csv(out / "trace.csv");
    write_trace_csv(csv, wrapped, "aux");
    json summary = forward_summary(wrapped, detect_phases(traj), strategy);
    json plan = json::array();
    for (const auto & p : phase_plan(s0, cfg.limits, strategy)) {
      plan.push_back({{"kind", std::string(to_string(p.kind))}, {"t_start", p.t_start}, {"t_end", std::isfinite(p.t_end) ? json(p.t_end) : json(nullptr)}});
    }
    summary["plan"] = plan;
    write_json(out / "summary.json", summary);
    if (cfg.verbose > 0) { err << summary.dump(2) << '\n'; }
    return 0;
  } catch (const std::exception & e) {
    err << "forward: " << e.what() << '\n';
    return 1;
  }
}

namespace {

int mpc_exit_code(MpcStatus s)
{
  switch (s) {
    case MpcStatus::converged: return 0;
    case MpcStatus::time_limit: return 2;
    case MpcStatus::solver_chain_failure: return 3;
  }
  return 3;
}

MpcTrace run_and_write(const ExperimentConfig & cfg, const std::array<double, 2> & x0, const fs::path & dir,
                       std::ostream * progress, std::mutex * progress_mutex)
{
  MpcConfig m = cfg.mpc_config();
  if (progress != nullptr) {
    m.on_record = [&](const MpcRecord & r) {
      std::unique_lock<std::mutex> lock;
      if (progress_mutex != nullptr) { lock = std::unique_lock<std::mutex>(*progress_mutex); }
      *progress << "(" << x0[0] << "," << x0[1] << ") t " << std::setw(6) << r.t << "  r " << std::setw(10)
                << r.state.r() << "  J " << std::setw(12) << r.objective << "  " << to_string(r.status) << "  "
                << to_string(r.source) << "  " << r.solve_time << " s\n";
    };
    if (cfg.verbose > 1 && progress_mutex == nullptr) {
      m.solver.verbosity = cfg.verbose - 1;
      m.solver.log = progress;
    }
  }
  const MpcTrace trace = run_mpc(State{x0[0], x0[1], 0, 0, 0}, m);
  fs::create_directories(dir);
  std::ofstream csv(dir / "trace.csv");
  write_trace_csv(csv, trace);
  json summary = trace.summary();
  summary["x0"] = {x0[0], x0[1]};
  summary["damping_half_plane"] = damping_half_plane(trace);
  write_json(dir / "summary.json", summary);
  return trace;
}

}  // namespace

int cmd_nmpc(const ExperimentConfig & cfg, std::ostream & err)
{
  try {
    cfg.validate();
    const fs::path out = prepare_out(cfg);
    const MpcTrace trace = run_and_write(cfg, cfg.x0, out, cfg.verbose > 0 ? &err : nullptr, nullptr);
    if (trace.status != MpcStatus::converged) {
      err << "nmpc: " << to_string(trace.status) << (trace.message.empty() ? "" : ": " + trace.message) << '\n';
    }
    return mpc_exit_code(trace.status);
  } catch (const std::exception & e) {
    err << "nmpc: " << e.what() << '\n';
    return 1;
  }
}

int cmd_grid(const ExperimentConfig & cfg, std::ostream & err)
{
  try {
    cfg.validate();
    const fs::path out = prepare_out(cfg);
    const auto starts = cfg.grid_starts();
    if (starts.empty()) { throw ConfigError("grid is empty"); }

    std::vector<json> results(starts.size());
    std::atomic<std::size_t> next{0};
    std::mutex io;
    auto worker = [&] {
      for (std::size_t i = next++; i < starts.size(); i = next++) {
        std::ostringstream name;
        name << "run_" << std::setw(2) << std::setfill('0') << i;
        json r{{"x0", {starts[i][0], starts[i][1]}}, {"dir", name.str()}};
        try {
          const MpcTrace trace =
              run_and_write(cfg, starts[i], out / name.str(), cfg.verbose > 0 ? &err : nullptr, &io);
          const State & s = trace.final_state;
          r["status"] = std::string(to_string(trace.status));
          r["converged"] = trace.status == MpcStatus::converged;
          r["iterations"] = trace.iterations();
          r["final_time"] = trace.final_time;
          r["final_r2"] = s.x * s.x + s.z * s.z;
          r["final_speed"] = s.speed();
          r["final_theta"] = s.theta;
          r["damping_half_plane"] = damping_half_plane(trace);
          r["solve_time_s"] = trace.total_solve_time();
        } catch (const std::exception & e) {
          r["status"] = "error";
          r["converged"] = false;
          r["message"] = e.what();
        }
        results[i] = std::move(r);
      }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(cfg.jobs, static_cast<int>(starts.size()));
    for (int t = 0; t < n; ++t) { pool.emplace_back(worker); }
    for (auto & t : pool) { t.join(); }

    int converged = 0;
    for (const auto & r : results) { converged += r.value("converged", false) ? 1 : 0; }
    json agg{{"runs", results},
             {"converged", converged},
             {"total", static_cast<int>(starts.size())},
             {"all_converged", converged == static_cast<int>(starts.size())}};
    write_json(out / "aggregate.json", agg);
    if (converged != static_cast<int>(starts.size())) {
      err << "grid: " << converged << "/" << starts.size() << " runs converged\n";
      return 2;
    }
    return 0;
  } catch (const std::exception & e) {
    err << "grid: " << e.what() << '\n';
    return 1;
  }
}

int cmd_verify(const ExperimentConfig & cfg, std::ostream & err)
{
  try {
    cfg.validate();
    const fs::path out = prepare_out(cfg);
    VerifyOptions opt;
    opt.limits = cfg.limits;
    opt.samples = cfg.samples;
    opt.seed = cfg.seed;
    opt.horizon = cfg.horizon;
    opt.delta = cfg.delta;
    opt.cost.power_term_scale = cfg.cost_mutation;
    const StabilityReport report = run_verification(opt);
    json j = report.to_json();
    j["passed"] = report.passed();
    write_json(out / "report.json", j);
    for (const auto & c : report.checks) {
      if (!c.passed || cfg.verbose > 0) {
        err << (c.passed ? "pass " : "FAIL ") << c.name << "  worst " << c.worst << "  tol " << c.tolerance
            << (c.note.empty() ? "" : "  " + c.note) << '\n';
      }
    }
    return report.passed() ? 0 : 1;
  } catch (const std::exception & e) {
    err << "verify: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace nhmpc
