#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nhmpc/aux_controller.hpp"
#include "nhmpc/errors.hpp"

using namespace nhmpc;

namespace {

double phase_duration(const std::vector<AuxPhase> & phases, PhaseKind k)
{
  double d = 0;
  for (const auto & p : phases) {
    if (p.kind == k) { d += p.duration(); }
  }
  return d;
}

}  // namespace

TEST(AuxController, PlanFromCorner)
{
  const auto plan = phase_plan(State{-4, 4, 0, 0, 0}, InputLimits{}, Branch::toward);
  ASSERT_EQ(plan.size(), 5u);
  EXPECT_NEAR(plan[0].duration(), 6.0, 1e-12);
  EXPECT_NEAR(plan[1].duration(), 2.0, 1e-12);
  EXPECT_NEAR(plan[2].duration(), 2.0, 1e-12);
  EXPECT_NEAR(plan[3].duration(), 6.0, 1e-12);
  EXPECT_EQ(plan[4].kind, PhaseKind::stop);
}

TEST(AuxController, PlanAtOrigin)
{
  const auto plan = phase_plan(State{}, InputLimits{}, Branch::toward);
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_EQ(plan[0].kind, PhaseKind::stop);
}

TEST(AuxController, NoRotationWhenAligned)
{
  // (0, -2) with theta = 0 already points at the origin
  const auto plan = phase_plan(State{0, -2, 0, 0, 0}, InputLimits{2.0, std::numbers::pi / 8}, Branch::toward);
  EXPECT_DOUBLE_EQ(plan[0].duration(), 0.0);
  EXPECT_NEAR(plan[1].duration(), 1.0, 1e-12);
  EXPECT_NEAR(plan[2].duration(), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(plan[3].duration(), 0.0);
}

TEST(AuxController, SwitchingTimesAtRest)
{
  const InputLimits lim;
  for (double r = 1e-3; r < 1e3; r *= 3.7) {
    const auto ts = lemma1_timestamps(r, 0.0, 0.0, lim);
    EXPECT_NEAR(ts.t1, std::sqrt(r / lim.a_max), 1e-12 * std::max(1.0, ts.t1));
    EXPECT_NEAR(ts.t2, 2 * std::sqrt(r / lim.a_max), 1e-12 * std::max(1.0, ts.t2));
  }
  const double r = 3.0;
  const auto edge = lemma1_timestamps(r, std::sqrt(2 * lim.a_max * r), 0.5, lim);
  EXPECT_NEAR(edge.t1, 0.0, 1e-10);
  EXPECT_NEAR(edge.t3 - edge.t2, 0.5 / lim.omega_max, 1e-12);
  EXPECT_THROW(lemma1_timestamps(r, 1.1 * std::sqrt(2 * lim.a_max * r), 0.0, lim), TerminalSetViolation);
}

TEST(AuxController, ArrivalProfileLandsExactly)
{
  const double a = std::sqrt(2.0), h = 0.1;
  for (double d : {0.05, 0.7, 3.0, 5.657}) {
    double p = d, v = 0;
    int steps = 0;
    while ((p > 1e-12 || std::abs(v) > 1e-12) && steps < 1000) {
      const double acc = arrival_acceleration(p, v, a, h);
      ASSERT_LE(std::abs(acc), a * (1 + 1e-12));
      p -= v * h + 0.5 * acc * h * h;
      v += acc * h;
      ++steps;
    }
    EXPECT_NEAR(p, 0.0, 1e-9) << d;
    EXPECT_NEAR(v, 0.0, 1e-9) << d;
    EXPECT_LE(steps * h, 2 * std::sqrt(d / a) + 2 * h + 1e-9) << d;
  }
}

TEST(AuxController, PreferredStrategy)
{
  EXPECT_EQ(preferred_strategy(State{0, -4, 0, 0, 0}), Branch::toward);
  EXPECT_EQ(preferred_strategy(State{0, 4, 0, 0, 0}), Branch::away);
}

TEST(AuxController, SampledPhasesMatchPlan)
{
  const InputLimits lim;
  const auto traj = aux_rollout(State{-4, 4, 0, 0, 0}, lim, Branch::toward, 0.1, 200);
  const auto phases = detect_phases(traj);
  EXPECT_NEAR(phase_duration(phases, PhaseKind::rotate_to_set), 6.0, 0.1 + 1e-9);
  EXPECT_NEAR(phase_duration(phases, PhaseKind::accelerate), 2.0, 0.1 + 1e-9);
  EXPECT_NEAR(phase_duration(phases, PhaseKind::decelerate), 2.0, 0.1 + 1e-9);
  EXPECT_NEAR(phase_duration(phases, PhaseKind::rotate_to_zero), 6.0, 0.1 + 1e-9);
  EXPECT_LT(traj.states.back().vec().norm(), 1e-3);
}

TEST(AuxController, ReachesOriginFromRandomRest)
{
  const InputLimits lim;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-6, 6), ang(-3, 3);
  for (int i = 0; i < 20; ++i) {
    const State s0{pos(rng), pos(rng), ang(rng), 0, 0};
    for (Branch b : {Branch::toward, Branch::away}) {
      const auto traj = aux_rollout(s0, lim, b, 0.1, 400);
      for (const auto & u : traj.controls) { ASSERT_TRUE(lim.admits(u)); }
      EXPECT_LT(traj.states.back().vec().norm(), 1e-6) << s0.x << "," << s0.z << " " << to_string(b);
    }
  }
}

TEST(AuxController, ReverseStrategyMirrorsPhases)
{
  const InputLimits lim;
  const auto traj = aux_rollout(State{0, -4, 0, 0, 0}, lim, Branch::away, 0.1, 300);
  const auto phases = detect_phases(traj);
  // pi rotation first, translation backwards, pi rotation back
  EXPECT_NEAR(phase_duration(phases, PhaseKind::rotate_to_set), 8.0, 0.1 + 1e-9);
  EXPECT_NEAR(phase_duration(phases, PhaseKind::accelerate), std::sqrt(4 / lim.a_max), 0.1 + 1e-9);
  EXPECT_NEAR(phase_duration(phases, PhaseKind::rotate_to_zero), 8.0, 0.1 + 1e-9);
  EXPECT_LT(traj.states.back().vec().norm(), 1e-6);
}
