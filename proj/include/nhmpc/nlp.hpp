#pragma once

/**
 * @file
 * @brief Callback contract between nonlinear programs and solver backends.
 *
 *   minimize f(w)  subject to  c(w) = 0,  g(w) <= 0,  lower <= w <= upper
 */

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

namespace nhmpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct NlpEvaluation
{
  double f{0};
  Eigen::VectorXd grad;  ///< df/dw
  Eigen::VectorXd c;     ///< equalities
  SparseMatrix jc;       ///< dc/dw
  Eigen::VectorXd g;     ///< inequalities, feasible when <= 0
  SparseMatrix jg;       ///< dg/dw
};

class NlpProblem
{
public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_equalities() const = 0;
  virtual int num_inequalities() const = 0;

  /// Simple bounds; use +-infinity for free variables.
  virtual void bounds(Eigen::VectorXd & lower, Eigen::VectorXd & upper) const = 0;

  /// Values always; gradient and Jacobians only when @p derivatives is set.
  virtual void evaluate(const Eigen::VectorXd & w, bool derivatives, NlpEvaluation & out) const = 0;

  /// Groups of variables such that the Hessian of f + l'c + m'g is block diagonal over them.
  /// The default is a single dense block.
  virtual std::vector<std::vector<int>> separable_blocks() const;

  /// Diagonal used to initialize the quasi-Newton Hessian blocks.
  virtual Eigen::VectorXd initial_hessian_diagonal() const;
};

}  // namespace nhmpc
