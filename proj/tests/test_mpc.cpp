#include <gtest/gtest.h>

#include "nhmpc/errors.hpp"
#include "nhmpc/mpc.hpp"

using namespace nhmpc;

TEST(Mpc, OriginNeedsNoIteration)
{
  const auto trace = run_mpc(State{}, MpcConfig{});
  EXPECT_EQ(trace.status, MpcStatus::converged);
  EXPECT_EQ(trace.iterations(), 0);
  EXPECT_EQ(trace.final_time, 0.0);
}

TEST(Mpc, ConvergesAlongAxis)
{
  MpcConfig cfg;
  int calls = 0;
  cfg.on_record = [&](const MpcRecord &) { ++calls; };
  const auto trace = run_mpc(State{0, -4, 0, 0, 0}, cfg);
  ASSERT_EQ(trace.status, MpcStatus::converged) << trace.message;
  EXPECT_EQ(calls, trace.iterations());
  const auto & s = trace.final_state;
  EXPECT_LT(s.x * s.x + s.z * s.z, 1e-8);
  for (const auto & r : trace.records) {
    EXPECT_TRUE(cfg.ocp.limits.admits(r.control));
    if (r.status == SolveStatus::optimal) { EXPECT_LE(r.terminal_violation, 1e-6); }
  }
  const auto j = trace.summary();
  EXPECT_EQ(j["status"], "converged");
  EXPECT_EQ(j["iterations"], trace.iterations());
  EXPECT_EQ(j["controls"]["auxiliary"], 0);
}

TEST(Mpc, TimeLimitKeepsBounds)
{
  MpcConfig cfg;
  cfg.max_sim_time = 0.5;
  const auto trace = run_mpc(State{-4, 4, 0, 0, 0}, cfg);
  EXPECT_EQ(trace.status, MpcStatus::time_limit);
  ASSERT_EQ(trace.iterations(), 5);
  EXPECT_NEAR(trace.final_time, 0.5, 1e-12);
  for (const auto & r : trace.records) {
    EXPECT_TRUE(cfg.ocp.limits.admits(r.control));
    EXPECT_NE(r.source, ControlSource::auxiliary);
  }
  // optimal costs decrease along the closed loop
  for (std::size_t k = 1; k < trace.records.size(); ++k) {
    const auto & a = trace.records[k - 1];
    const auto & b = trace.records[k];
    if (a.status == SolveStatus::optimal && b.status == SolveStatus::optimal) { EXPECT_LT(b.objective, a.objective); }
  }
}

TEST(Mpc, Validation)
{
  MpcConfig cfg;
  cfg.epsilon_r = 0;
  EXPECT_THROW(run_mpc(State{}, cfg), ConfigError);
  cfg = {};
  cfg.backend = "nope";
  EXPECT_THROW(run_mpc(State{}, cfg), ConfigError);
  cfg = {};
  cfg.max_sim_time = -1;
  EXPECT_THROW(run_mpc(State{}, cfg), ConfigError);
  EXPECT_THROW(run_mpc(State{NAN, 0, 0, 0, 0}, MpcConfig{}), NumericalError);
}

TEST(Mpc, Names)
{
  EXPECT_EQ(to_string(MpcStatus::time_limit), "time-limit");
  EXPECT_EQ(to_string(ControlSource::best_feasible), "best-feasible");
}
