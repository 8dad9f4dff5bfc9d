#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "nhmpc/errors.hpp"
#include "nhmpc/solver.hpp"

using namespace nhmpc;

namespace {

// min sum (w_i - t_i)^2 with optional linear equality sum(w) = s and inequality 1 - w_0 <= 0
class Quadratic : public NlpProblem
{
public:
  Quadratic(Eigen::VectorXd target, bool eq, bool ineq) : t_(std::move(target)), eq_(eq), ineq_(ineq) {}

  int num_variables() const override { return static_cast<int>(t_.size()); }
  int num_equalities() const override { return eq_ ? 1 : 0; }
  int num_inequalities() const override { return ineq_ ? 1 : 0; }
  void bounds(Eigen::VectorXd & lo, Eigen::VectorXd & hi) const override
  {
    lo = Eigen::VectorXd::Constant(t_.size(), -std::numeric_limits<double>::infinity());
    hi = -lo;
  }
  void evaluate(const Eigen::VectorXd & w, bool derivatives, NlpEvaluation & out) const override
  {
    out.f = (w - t_).squaredNorm();
    out.c.resize(num_equalities());
    out.g.resize(num_inequalities());
    if (eq_) { out.c[0] = w.sum() - 1.0; }
    if (ineq_) { out.g[0] = 1.0 - w[0]; }
    if (!derivatives) { return; }
    out.grad = 2 * (w - t_);
    out.jc.resize(num_equalities(), t_.size());
    out.jg.resize(num_inequalities(), t_.size());
    if (eq_) {
      for (int i = 0; i < t_.size(); ++i) { out.jc.insert(0, i) = 1.0; }
    }
    if (ineq_) { out.jg.insert(0, 0) = -1.0; }
  }

private:
  Eigen::VectorXd t_;
  bool eq_;
  bool ineq_;
};

// min x0 s.t. x0^2 + x1^2 = 1, box x1 in [-0.5, 0.5]
class Circle : public NlpProblem
{
public:
  int num_variables() const override { return 2; }
  int num_equalities() const override { return 1; }
  int num_inequalities() const override { return 0; }
  void bounds(Eigen::VectorXd & lo, Eigen::VectorXd & hi) const override
  {
    lo = Eigen::Vector2d(-std::numeric_limits<double>::infinity(), -0.5);
    hi = Eigen::Vector2d(std::numeric_limits<double>::infinity(), 0.5);
  }
  void evaluate(const Eigen::VectorXd & w, bool derivatives, NlpEvaluation & out) const override
  {
    out.f = w[0];
    out.c = Eigen::VectorXd::Constant(1, w.squaredNorm() - 1.0);
    out.g.resize(0);
    if (!derivatives) { return; }
    out.grad = Eigen::Vector2d(1.0, 0.0);
    out.jc.resize(1, 2);
    out.jc.insert(0, 0) = 2 * w[0];
    out.jc.insert(0, 1) = 2 * w[1];
    out.jg.resize(0, 2);
  }
};

}  // namespace

TEST(Solver, ActiveInequality)
{
  const Quadratic p(Eigen::VectorXd::Zero(1), false, true);
  const auto res = solve_auglag(p, Eigen::VectorXd::Constant(1, 3.0), SolverConfig{});
  EXPECT_EQ(res.outcome.status, SolveStatus::optimal);
  EXPECT_NEAR(res.w[0], 1.0, 1e-7);
  EXPECT_NEAR(res.mu[0], 2.0, 1e-5);
}

TEST(Solver, LinearEquality)
{
  const Quadratic p(Eigen::Vector2d(2.0, 1.0), true, false);
  for (const auto & name : backend_names()) {
    const auto res = select_backend(name)(p, Eigen::Vector2d(0, 0), SolverConfig{}, nullptr);
    EXPECT_EQ(res.outcome.status, SolveStatus::optimal) << name;
    EXPECT_NEAR(res.w[0], 1.0, 1e-7) << name;
    EXPECT_NEAR(res.w[1], 0.0, 1e-7) << name;
  }
}

TEST(Solver, HandEquality)
{
  // (x-2)^2 + y^2 s.t. x + y = 1
  const Quadratic p(Eigen::Vector2d(2.0, 0.0), true, false);
  const auto res = solve_auglag(p, Eigen::Vector2d(5, 5), SolverConfig{});
  EXPECT_NEAR(res.w[0], 1.5, 1e-7);
  EXPECT_NEAR(res.w[1], -0.5, 1e-7);
}

TEST(Solver, NonlinearEqualityWithBounds)
{
  // (sqrt(3)/2, 0.5) is a bound-constrained local minimum; start in the basin of (-1, 0)
  const Circle p;
  for (auto h : {HessianApprox::finite_difference, HessianApprox::bfgs}) {
    SolverConfig cfg;
    cfg.hessian = h;
    const auto res = solve_auglag(p, Eigen::Vector2d(-0.3, 0.4), cfg);
    EXPECT_EQ(res.outcome.status, SolveStatus::optimal);
    EXPECT_NEAR(res.w[0], -1.0, 1e-6);
    EXPECT_NEAR(res.w[1], 0.0, 1e-5);
    EXPECT_LE(res.outcome.constraint_violation, 1e-8);
  }
}

TEST(Solver, KeepsFeasibleStartWhenOptimal)
{
  const Quadratic p(Eigen::VectorXd::Zero(1), false, true);
  const auto res = solve_auglag(p, Eigen::VectorXd::Constant(1, 1.0), SolverConfig{});
  EXPECT_EQ(res.outcome.status, SolveStatus::optimal);
  EXPECT_TRUE(res.outcome.has_feasible);
  EXPECT_NEAR(res.best_feasible[0], 1.0, 1e-7);
}

TEST(Solver, BackendRegistry)
{
  EXPECT_NO_THROW(select_backend(default_backend));
  EXPECT_NO_THROW(select_backend("builtin-auglag-lbfgs"));
  EXPECT_THROW(select_backend("no-such-solver"), ConfigError);
  register_backend("test-echo", [](const NlpProblem &, const Eigen::VectorXd & w0, const SolverConfig &,
                                   const Multipliers *) {
    SolveResult r;
    r.w = w0;
    r.outcome.status = SolveStatus::iteration_limit;
    return r;
  });
  const Quadratic p(Eigen::VectorXd::Zero(1), false, false);
  EXPECT_EQ(select_backend("test-echo")(p, Eigen::VectorXd::Ones(1), {}, nullptr).w[0], 1.0);
}

TEST(Solver, ConfigValidation)
{
  SolverConfig cfg;
  cfg.penalty_growth = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.constraint_tolerance = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Solver, Deterministic)
{
  const Circle p;
  const auto a = solve_auglag(p, Eigen::Vector2d(0.3, 0.4), SolverConfig{});
  const auto b = solve_auglag(p, Eigen::Vector2d(0.3, 0.4), SolverConfig{});
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.outcome.inner_iterations, b.outcome.inner_iterations);
}
