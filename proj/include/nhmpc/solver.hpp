#pragma once

/**
 * @file
 * @brief Augmented-Lagrangian solver backends and the backend registry.
 */

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "nhmpc/nlp.hpp"

namespace nhmpc {

enum class SolveStatus { optimal, feasible_suboptimal, infeasible, iteration_limit, numerical_failure };

std::string to_string(SolveStatus s);

enum class InnerMethod {
  projected_newton,  ///< partitioned damped BFGS plus the penalty Gauss-Newton term
  projected_lbfgs,   ///< limited-memory BFGS on the free variables
};

enum class HessianApprox {
  /// per-block forward differences of the Lagrangian gradient; one gradient evaluation per
  /// slot of the largest separable block
  finite_difference,
  /// per-block damped BFGS updates
  bfgs,
};

struct SolverConfig
{
  int max_outer_iterations{40};
  int max_inner_iterations{200};
  double constraint_tolerance{1e-8};
  double optimality_tolerance{1e-6};
  /// iterates with violation below this count as feasible for the fallback iterate
  double feasible_tolerance{1e-6};
  double initial_penalty{10.0};
  double penalty_growth{10.0};
  double max_penalty{1e10};
  /// penalty is raised when the violation did not shrink by this factor
  double violation_reduction{0.5};
  double max_multiplier{1e8};
  double armijo{1e-4};
  double backtrack{0.5};
  int max_backtracks{40};
  int lbfgs_memory{10};
  InnerMethod inner{InnerMethod::projected_newton};
  HessianApprox hessian{HessianApprox::finite_difference};
  /// iteration log (iter, objective, violation, step norm); 0 = silent
  int verbosity{0};
  std::ostream * log{nullptr};

  /// Throws ConfigError on non-positive tolerances or penalty_growth <= 1.
  void validate() const;
};

struct SolveOutcome
{
  SolveStatus status{SolveStatus::numerical_failure};
  int outer_iterations{0};
  int inner_iterations{0};
  double objective{0};
  double constraint_violation{0};  ///< max(|c|_inf, max(g, 0))
  double kkt_residual{0};          ///< projected Lagrangian gradient, inf-norm
  double wall_time{0};             ///< seconds
  bool has_feasible{false};        ///< some iterate (or w0) met feasible_tolerance
};

struct SolveResult
{
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;  ///< equality multipliers
  Eigen::VectorXd mu;      ///< inequality multipliers (>= 0)
  SolveOutcome outcome;
  /// lowest-objective point (w0 included) with violation <= feasible_tolerance; empty if none
  Eigen::VectorXd best_feasible;
  double best_feasible_objective{0};
};

/// Optional multiplier warm start.
struct Multipliers
{
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;
};

/// Augmented Lagrangian with a bound-constrained quasi-Newton inner solve.
SolveResult solve_auglag(const NlpProblem & p, const Eigen::VectorXd & w0, const SolverConfig & cfg,
                         const Multipliers * warm = nullptr);

using SolverBackend = std::function<SolveResult(const NlpProblem &, const Eigen::VectorXd &,
                                                const SolverConfig &, const Multipliers *)>;

/// Backend names: "builtin-auglag" (default), "builtin-auglag-lbfgs". Throws ConfigError for
/// unknown names.
SolverBackend select_backend(const std::string & name);

/// Add or replace a named backend.
void register_backend(const std::string & name, SolverBackend backend);

std::vector<std::string> backend_names();

inline constexpr const char * default_backend = "builtin-auglag";

}  // namespace nhmpc
