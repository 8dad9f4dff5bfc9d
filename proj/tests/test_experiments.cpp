#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nhmpc/errors.hpp"
#include "nhmpc/experiments.hpp"

using namespace nhmpc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string & name)
{
  const fs::path p = fs::temp_directory_path() / ("nhmpc_test_" + name);
  fs::remove_all(p);
  return p;
}

json load(const fs::path & p)
{
  std::ifstream is(p);
  return json::parse(is);
}

}  // namespace

TEST(TraceCsv, RoundTrip)
{
  const Trajectory traj = aux_rollout(State{-1, 2, 0, 0, 0}, InputLimits{}, Branch::toward, 0.1, 40);
  std::stringstream ss;
  write_trace_csv(ss, traj, "aux");
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "t,x,z,theta,vx,vz,a,omega,objective,status");

  const auto rows = read_trace_csv(ss);
  ASSERT_EQ(rows.size(), traj.states.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k].t, traj.t[k]);
    EXPECT_EQ(rows[k].state.vec(), traj.states[k].vec());
    EXPECT_EQ(rows[k].status, "aux");
  }
  EXPECT_EQ(rows.back().control.a, 0.0);
  EXPECT_EQ(rows.front().control.vec(), traj.controls.front().vec());
}

TEST(TraceCsv, MissingColumn)
{
  std::stringstream ss("t,x,z,theta,vx,vz,a,omega,status\n0,0,0,0,0,0,0,0,aux\n");
  try {
    read_trace_csv(ss);
    FAIL();
  } catch (const std::runtime_error & e) {
    EXPECT_NE(std::string(e.what()).find("objective"), std::string::npos);
  }
  std::stringstream bad("t,x,z,theta,vx,vz,a,omega,objective,status\n0,0,zz,0,0,0,0,0,0,aux\n");
  EXPECT_THROW(read_trace_csv(bad), std::runtime_error);
}

TEST(TraceCsv, MpcTraceHasFinalRow)
{
  MpcTrace trace;
  MpcRecord r;
  r.state = State{1, 0, 0, 0, 0};
  r.control = Control{0.5, 0.1};
  r.objective = 3;
  trace.records.push_back(r);
  trace.final_state = State{0.9, 0, 0.01, 0, 0};
  trace.final_time = 0.1;
  std::stringstream ss;
  write_trace_csv(ss, trace);
  const auto rows = read_trace_csv(ss);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].objective, 3);
  EXPECT_EQ(rows[0].status, "optimal");
  EXPECT_EQ(rows[1].state.x, 0.9);
  EXPECT_EQ(rows[1].control.omega, 0.0);
}

TEST(Config, JsonRoundTrip)
{
  ExperimentConfig c;
  c.experiment = ExperimentKind::nmpc_grid;
  c.x0 = {1.5, -2};
  c.grid = {{1, 1}, {2, -3}};
  c.horizon = 40;
  c.limits.a_max = 2;
  c.strategy = Branch::away;
  const ExperimentConfig d = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
  EXPECT_EQ(d.grid_starts().size(), 2u);
  EXPECT_EQ(ExperimentConfig{}.grid_starts().size(), 8u);

  EXPECT_THROW(ExperimentConfig::from_json(json{{"horizn", 3}}), ConfigError);
  EXPECT_EQ(experiment_from_string("grid"), ExperimentKind::nmpc_grid);
  EXPECT_THROW(experiment_from_string("bogus"), ConfigError);
}

TEST(Config, Validation)
{
  ExperimentConfig c;
  c.limits.omega_max = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.delta = 0.15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.jobs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  std::ostringstream err;
  c.out_dir = scratch("invalid").string();
  EXPECT_EQ(cmd_forward(c, err), 1);
  EXPECT_FALSE(err.str().empty());
}

TEST(Verbs, Forward)
{
  ExperimentConfig c;
  c.experiment = ExperimentKind::forward_aux;
  c.out_dir = scratch("forward").string();
  std::ostringstream err;
  ASSERT_EQ(cmd_forward(c, err), 0) << err.str();
  const fs::path out(c.out_dir);
  EXPECT_TRUE(fs::exists(out / "config.json"));
  const json s = load(out / "summary.json");
  EXPECT_EQ(s["strategy"], "toward");
  EXPECT_EQ(s["phases"].size(), 5u);
  EXPECT_EQ(s["phases"].back()["kind"], "stop");
  EXPECT_LT(s["final_norm"].get<double>(), 1e-3);
  std::ifstream csv(out / "trace.csv");
  const auto rows = read_trace_csv(csv);
  EXPECT_EQ(rows.size(), s["samples"].get<std::size_t>());
  EXPECT_EQ(ExperimentConfig::from_json(load(out / "config.json")).to_json(), c.to_json());
}

TEST(Verbs, GridOfOrigin)
{
  ExperimentConfig c;
  c.experiment = ExperimentKind::nmpc_grid;
  c.grid = {{0, 0}};
  c.out_dir = scratch("grid").string();
  std::ostringstream err;
  ASSERT_EQ(cmd_grid(c, err), 0) << err.str();
  const json agg = load(fs::path(c.out_dir) / "aggregate.json");
  EXPECT_TRUE(agg["all_converged"].get<bool>());
  EXPECT_EQ(agg["runs"][0]["iterations"], 0);
  const json s = load(fs::path(c.out_dir) / "run_00" / "summary.json");
  EXPECT_EQ(s["status"], "converged");
  EXPECT_EQ(s["damping_half_plane"], "x=0");
}

TEST(Verbs, NmpcTimeLimit)
{
  ExperimentConfig c;
  c.x0 = {0, 1};
  c.max_sim_time = 0.3;
  c.out_dir = scratch("nmpc").string();
  std::ostringstream err;
  EXPECT_EQ(cmd_nmpc(c, err), 2);
  std::ifstream csv(fs::path(c.out_dir) / "trace.csv");
  EXPECT_EQ(read_trace_csv(csv).size(), 4u);
}

TEST(Verbs, VerifyDetectsMutation)
{
  ExperimentConfig c;
  c.experiment = ExperimentKind::verify;
  c.samples = 300;
  c.out_dir = scratch("verify").string();
  std::ostringstream err;
  EXPECT_EQ(cmd_verify(c, err), 0) << err.str();
  EXPECT_TRUE(load(fs::path(c.out_dir) / "report.json")["passed"].get<bool>());

  c.cost_mutation = 1.01;
  std::ostringstream err2;
  EXPECT_EQ(cmd_verify(c, err2), 1);
  EXPECT_NE(err2.str().find("SC5_lyapunov"), std::string::npos);
}
