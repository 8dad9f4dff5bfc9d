#pragma once

/**
 * @file
 * @brief Direct multiple shooting transcription of the finite-horizon optimal control problem.
 *
 * Decision vector layout: w = [x_0, ..., x_N, u_0, ..., u_{N-1}] with 5 states and 2 controls
 * per node. Equalities: initial pin x_0 = x_init, shooting defects x_{k+1} - Phi(x_k, u_k),
 * terminal alignment (V x e_z, r x e_z). Each problem targets one branch of the terminal set;
 * with rho the distance to the origin and v the speed toward it, both measured along the body
 * axis, the inequalities are -v <= 0 and v^2 - 2 a_m rho <= 0. These stay regular at the
 * origin. Objective: delta * sum_k L(x_k) + F(x_N).
 */

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "nhmpc/dynamics.hpp"
#include "nhmpc/nlp.hpp"
#include "nhmpc/solver.hpp"
#include "nhmpc/terminal_geometry.hpp"

namespace nhmpc {

enum class DerivativeMode { sensitivity, finite_difference };

struct OcpConfig
{
  int horizon{61};             ///< N, shooting intervals
  double mpc_period{0.1};      ///< delta (s)
  double integrator_step{0.1}; ///< h (s); delta must be an integer multiple
  InputLimits limits{};
  /// relaxation of the terminal constraints; 0 keeps the alignment as equalities
  double terminal_tolerance{0.0};
  /// |theta|^3 ~ (theta^2 + mu^2)^{3/2} - mu^3 inside the solver objective
  double angle_smoothing{1e-6};
  /// r ~ sqrt(x^2 + z^2 + mu^2), likewise |V|, inside the solver objective
  double norm_smoothing{1e-5};
  DerivativeMode derivatives{DerivativeMode::sensitivity};

  /// Throws ConfigError on invalid values.
  void validate() const;
  /// Integrator substeps per shooting interval.
  int substeps() const;
};

enum class WarmTail {
  duplicate,  ///< repeat the last node and control
  auxiliary,  ///< extend by one auxiliary-controller step from the last node
};

struct OcpSolution
{
  std::vector<State> states;      ///< N + 1 predicted states, theta not wrapped
  std::vector<Control> controls;  ///< N controls
  double objective{0};            ///< exact (unsmoothed) objective
  SolveOutcome outcome;
  double max_defect{0};
  double max_terminal_violation{0};
  double max_violation{0};
  Eigen::VectorXd w;
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;
  /// first control of the best feasible iterate, when the solver saw one
  std::optional<Control> best_feasible_first;
  /// the best feasible iterate itself; empty if none
  Eigen::VectorXd best_feasible;
};

class OcpProblem : public NlpProblem
{
public:
  OcpProblem(const State & x_init, const OcpConfig & cfg, Branch terminal_branch = Branch::toward);

  int num_variables() const override;
  int num_equalities() const override;
  int num_inequalities() const override;
  void bounds(Eigen::VectorXd & lower, Eigen::VectorXd & upper) const override;
  void evaluate(const Eigen::VectorXd & w, bool derivatives, NlpEvaluation & out) const override;
  std::vector<std::vector<int>> separable_blocks() const override;
  Eigen::VectorXd initial_hessian_diagonal() const override;

  const OcpConfig & config() const { return cfg_; }
  const State & initial_state() const { return x_init_; }
  int horizon() const { return cfg_.horizon; }
  Branch terminal_branch() const { return branch_; }
  /// Branch::toward or Branch::away; anything else throws std::invalid_argument.
  void set_terminal_branch(Branch b);

  int state_index(int k) const { return 5 * k; }
  int control_index(int k) const { return 5 * (cfg_.horizon + 1) + 2 * k; }

  /// Equality rows: [0, 5) pin, [5, 5 + 5N) defects, then the terminal rows.
  int num_terminal_equalities() const;

  Eigen::VectorXd pack(const std::vector<State> & states, const std::vector<Control> & controls) const;
  std::vector<State> unpack_states(const Eigen::VectorXd & w) const;
  std::vector<Control> unpack_controls(const Eigen::VectorXd & w) const;

  /// delta * sum L(x_k) + F(x_N) with the exact terminal cost.
  double exact_objective(const Eigen::VectorXd & w) const;

  /// Largest terminal-constraint violation at w.
  double terminal_violation(const Eigen::VectorXd & w) const;

  /// Largest violation of any constraint, control bounds included.
  double max_violation(const Eigen::VectorXd & w) const;

  /// Dimensions, sparsity pattern and the point w.
  nlohmann::json dump(const Eigen::VectorXd & w) const;

private:
  void evaluate_sensitivity(const Eigen::VectorXd & w, bool derivatives, NlpEvaluation & out) const;
  double smoothed_objective(const Eigen::VectorXd & w, Eigen::VectorXd * grad) const;

  double branch_sign() const { return branch_ == Branch::toward ? 1.0 : -1.0; }

  State x_init_;
  OcpConfig cfg_;
  Branch branch_{Branch::toward};
};

/// Build the OCP for the measured state x_init.
OcpProblem build_ocp(const State & x_init, const OcpConfig & cfg, Branch terminal_branch = Branch::toward);

/// Branch of the terminal state of w when it lies in the terminal set (tolerance 1e-6) away
/// from the origin, @p fallback otherwise.
Branch infer_terminal_branch(const OcpProblem & p, const Eigen::VectorXd & w, Branch fallback);

/// Value, gradient, constraint values and Jacobians at w; throws NumericalError naming the
/// first node with a non-finite value.
NlpEvaluation eval_cost_and_derivatives(const OcpProblem & p, const Eigen::VectorXd & w);

/// Auxiliary-controller rollout from x_init over the horizon (preferred strategy).
Eigen::VectorXd aux_warm_start(const OcpProblem & p);

/// Shift a previous solution by one interval.
Eigen::VectorXd warm_start_from(const OcpProblem & p, const OcpSolution & prev, WarmTail tail = WarmTail::duplicate);

/// Identity on an aux rollout of matching length.
Eigen::VectorXd warm_start_from(const OcpProblem & p, const Trajectory & rollout);

/// Multipliers of a previous solve shifted like the primal warm start.
Multipliers shift_multipliers(const OcpProblem & p, const OcpSolution & prev);

/// Solve with a named backend and unpack.
OcpSolution solve_ocp(const OcpProblem & p, const Eigen::VectorXd & w0, const SolverConfig & cfg,
                      const std::string & backend = default_backend, const Multipliers * warm = nullptr);

}  // namespace nhmpc
