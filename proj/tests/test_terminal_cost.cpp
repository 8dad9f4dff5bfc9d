#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nhmpc/errors.hpp"
#include "nhmpc/terminal_cost.hpp"

using namespace nhmpc;

namespace {

TerminalSetState sample(std::mt19937_64 & rng, double a)
{
  std::uniform_real_distribution<double> u(0, 1);
  const double r = 10 * u(rng);
  return {r, std::numbers::pi * (2 * u(rng) - 1), std::sqrt(2 * a * r) * u(rng)};
}

}  // namespace

TEST(TerminalCost, StageCost)
{
  EXPECT_DOUBLE_EQ(stage_cost(State{1, 2, 3, 4, 5}), 55.0);
  EXPECT_DOUBLE_EQ(stage_cost(TerminalSetState{1, 2, 3}), 14.0);
}

TEST(TerminalCost, OriginIsRotationOnly)
{
  const InputLimits lim;
  const double th = 1.2;
  const auto f = terminal_cost({0, th, 0}, lim);
  EXPECT_NEAR(f.f, std::pow(th, 3) / (3 * lim.omega_max), 1e-14);
  EXPECT_DOUBLE_EQ(terminal_cost({0, 0, 0}, lim).f, 0.0);
}

TEST(TerminalCost, MatchesQuadrature)
{
  const InputLimits lim;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const auto ts = sample(rng, lim.a_max);
    const double f = terminal_cost(ts, lim).f;
    const auto o = terminal_cost_oracle(ts, lim);
    ASSERT_TRUE(o.parts.has_value());
    EXPECT_LE(std::abs(f - o.f) / std::max(1.0, o.f), 1e-6) << ts.r << " " << ts.theta << " " << ts.v;
    EXPECT_NEAR((*o.parts)[2], std::abs(std::pow(ts.theta, 3)) / (3 * lim.omega_max), 1e-12);
    EXPECT_GE(f, 0.0);
  }
}

TEST(TerminalCost, GradientMatchesDifferences)
{
  const InputLimits lim;
  std::mt19937_64 rng(12);
  const double h = 1e-6;
  int checked = 0;
  while (checked < 300) {
    auto ts = sample(rng, lim.a_max);
    ts.v *= 0.99;
    if (ts.v < 2 * h || ts.r < 1e-2) { continue; }
    ++checked;
    const auto g = terminal_cost_gradient(ts, lim);
    auto F = [&](double r, double th, double v) { return terminal_cost({r, th, v}, lim).f; };
    const double dr = (F(ts.r + h, ts.theta, ts.v) - F(ts.r - h, ts.theta, ts.v)) / (2 * h);
    const double dt = (F(ts.r, ts.theta + h, ts.v) - F(ts.r, ts.theta - h, ts.v)) / (2 * h);
    const double dv = (F(ts.r, ts.theta, ts.v + h) - F(ts.r, ts.theta, ts.v - h)) / (2 * h);
    EXPECT_NEAR(g.d_r, dr, 1e-5 * std::max(1.0, std::abs(dr)));
    EXPECT_NEAR(g.d_theta, dt, 1e-5 * std::max(1.0, std::abs(dt)));
    EXPECT_NEAR(g.d_v, dv, 1e-5 * std::max(1.0, std::abs(dv)));
  }
}

TEST(TerminalCost, SmoothVariantAgreesWithoutSmoothing)
{
  const InputLimits lim;
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const auto ts = sample(rng, lim.a_max);
    if (ts.r < 1e-3) { continue; }
    const auto s = terminal_cost_smooth(ts.r, ts.theta, ts.v, lim, 0.0);
    const auto g = terminal_cost_gradient(ts, lim);
    EXPECT_NEAR(s[0], terminal_cost(ts, lim).f, 1e-10 * std::max(1.0, s[0]));
    EXPECT_NEAR(s[1], g.d_r, 1e-8 * std::max(1.0, std::abs(g.d_r)));
    EXPECT_NEAR(s[2], g.d_theta, 1e-8 * std::max(1.0, std::abs(g.d_theta)));
    EXPECT_NEAR(s[3], g.d_v, 1e-8 * std::max(1.0, std::abs(g.d_v)));
  }
}

TEST(TerminalCost, LyapunovIdentities)
{
  const InputLimits lim;
  std::mt19937_64 rng(14);
  for (int i = 0; i < 200; ++i) {
    auto ts = sample(rng, lim.a_max);
    ts.v *= 0.999;
    const double L = stage_cost(ts);
    EXPECT_NEAR(terminal_cost_time_derivative(ts, {lim.a_max, 0}, lim), -L, 1e-8 * std::max(1.0, L));
    const TerminalSetState edge{ts.r, ts.theta, std::sqrt(2 * lim.a_max * ts.r)};
    const double Le = stage_cost(edge);
    EXPECT_NEAR(terminal_cost_time_derivative(edge, {-lim.a_max, 0}, lim), -Le, 1e-8 * std::max(1.0, Le));
  }
}

TEST(TerminalCost, RejectsOutsideSpeedBound)
{
  const InputLimits lim;
  EXPECT_THROW(terminal_cost({1.0, 0.0, 1.01 * std::sqrt(2 * lim.a_max)}, lim), TerminalSetViolation);
}
