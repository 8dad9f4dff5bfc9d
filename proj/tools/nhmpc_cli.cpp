// nhmpc: forward | nmpc | grid | verify

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>

#include "nhmpc/errors.hpp"
#include "nhmpc/experiments.hpp"

namespace {

struct Overrides
{
  std::string config;
  std::optional<std::string> out;
  std::optional<std::string> x0;
  std::optional<double> a_max;
  std::optional<double> omega_max;
  std::optional<double> h;
  std::optional<double> delta;
  std::optional<int> horizon;
  std::optional<double> eps_r;
  std::optional<double> eps_f;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<double> max_time;
  std::optional<std::string> strategy;
  std::optional<std::string> backend;
  std::optional<int> samples;
  std::optional<double> mutate;
  int verbose{0};
};

std::array<double, 2> parse_pair(const std::string & s)
{
  const auto comma = s.find(',');
  if (comma == std::string::npos) { throw nhmpc::ConfigError("--x0 expects X,Z"); }
  try {
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception &) {
    throw nhmpc::ConfigError("--x0 expects X,Z");
  }
}

nhmpc::ExperimentConfig resolve(const Overrides & o, nhmpc::ExperimentKind kind)
{
  nhmpc::ExperimentConfig cfg;
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) { throw nhmpc::ConfigError("cannot read " + o.config); }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception & e) {
      throw nhmpc::ConfigError(o.config + ": " + e.what());
    }
    cfg = nhmpc::ExperimentConfig::from_json(j);
  }
  cfg.experiment = kind;
  if (o.out) { cfg.out_dir = *o.out; }
  if (o.x0) { cfg.x0 = parse_pair(*o.x0); }
  if (o.a_max) { cfg.limits.a_max = *o.a_max; }
  if (o.omega_max) { cfg.limits.omega_max = *o.omega_max; }
  if (o.h) { cfg.h = *o.h; }
  if (o.delta) { cfg.delta = *o.delta; }
  if (o.horizon) { cfg.horizon = *o.horizon; }
  if (o.eps_r) { cfg.eps_r = *o.eps_r; }
  if (o.eps_f) { cfg.eps_f = *o.eps_f; }
  if (o.seed) { cfg.seed = *o.seed; }
  if (o.jobs) { cfg.jobs = *o.jobs; }
  if (o.max_time) { cfg.max_sim_time = *o.max_time; }
  if (o.backend) { cfg.backend = *o.backend; }
  if (o.samples) { cfg.samples = *o.samples; }
  if (o.mutate) { cfg.cost_mutation = *o.mutate; }
  if (o.strategy) { cfg = nhmpc::ExperimentConfig::from_json({{"strategy", *o.strategy}}, cfg); }
  if (o.verbose > 0) { cfg.verbose = o.verbose; }
  return cfg;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Stabilizing NMPC for a planar drift-nonholonomic vehicle"};
  app.require_subcommand(1);
  Overrides o;

  auto common = [&](CLI::App * sub) {
    // -h would clash with --h
    sub->set_help_flag("--help", "print this help message and exit");
    sub->add_option("--config", o.config, "JSON config file; flags override it")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--x0", o.x0, "initial position X,Z (at rest, theta = 0)");
    sub->add_option("--a-max", o.a_max, "acceleration limit (m/s^2)");
    sub->add_option("--omega-max", o.omega_max, "angular rate limit (rad/s)");
    sub->add_option("--h", o.h, "integrator step (s)");
    sub->add_option("--delta", o.delta, "MPC period (s)");
    sub->add_option("--horizon", o.horizon, "prediction horizon N");
    sub->add_option("--eps-r", o.eps_r, "stop threshold on r^2");
    sub->add_option("--eps-f", o.eps_f, "terminal constraint relaxation");
    sub->add_option("--seed", o.seed, "seed for randomized checks");
    sub->add_option("--jobs", o.jobs, "worker threads for grid runs");
    sub->add_flag("-v,--verbose", o.verbose, "progress on stderr; repeat for solver logs");
  };

  auto * forward = app.add_subcommand("forward", "simulate the auxiliary controller");
  common(forward);
  forward->add_option("--strategy", o.strategy, "toward | away | auto")->check(CLI::IsMember({"toward", "away", "auto"}));

  auto * nmpc = app.add_subcommand("nmpc", "closed-loop NMPC from --x0");
  common(nmpc);
  nmpc->add_option("--max-time", o.max_time, "simulated time limit (s)");
  nmpc->add_option("--backend", o.backend, "solver backend");

  auto * grid = app.add_subcommand("grid", "closed-loop NMPC over a grid of starts");
  common(grid);
  grid->add_option("--max-time", o.max_time, "simulated time limit (s)");
  grid->add_option("--backend", o.backend, "solver backend");

  auto * verify = app.add_subcommand("verify", "terminal ingredient verification suite");
  common(verify);
  verify->add_option("--samples", o.samples, "random samples per check");
  verify->add_option("--mutate-cost", o.mutate, "scale one terminal-cost term (mutation check)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (forward->parsed()) { return nhmpc::cmd_forward(resolve(o, nhmpc::ExperimentKind::forward_aux), std::cerr); }
    if (nmpc->parsed()) { return nhmpc::cmd_nmpc(resolve(o, nhmpc::ExperimentKind::nmpc_single), std::cerr); }
    if (grid->parsed()) { return nhmpc::cmd_grid(resolve(o, nhmpc::ExperimentKind::nmpc_grid), std::cerr); }
    if (verify->parsed()) { return nhmpc::cmd_verify(resolve(o, nhmpc::ExperimentKind::verify), std::cerr); }
  } catch (const std::exception & e) {
    std::cerr << "nhmpc: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
