#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <ostream>

#include "nhmpc/errors.hpp"
#include "nhmpc/solver.hpp"

namespace nhmpc {

using Eigen::VectorXd;

std::vector<std::vector<int>> NlpProblem::separable_blocks() const
{
  std::vector<int> all(num_variables());
  for (int i = 0; i < num_variables(); ++i) { all[i] = i; }
  return {all};
}

VectorXd NlpProblem::initial_hessian_diagonal() const { return VectorXd::Ones(num_variables()); }

std::string to_string(SolveStatus s)
{
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible_suboptimal: return "feasible-suboptimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::iteration_limit: return "iteration-limit";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "numerical-failure";
}

void SolverConfig::validate() const
{
  if (max_outer_iterations < 1 || max_inner_iterations < 1) {
    throw ConfigError("SolverConfig: iteration limits must be >= 1");
  }
  if (!(constraint_tolerance > 0) || !(optimality_tolerance > 0) || !(feasible_tolerance > 0)) {
    throw ConfigError("SolverConfig: tolerances must be > 0");
  }
  if (!(initial_penalty > 0) || !(max_penalty >= initial_penalty)) {
    throw ConfigError("SolverConfig: need 0 < initial_penalty <= max_penalty");
  }
  if (!(penalty_growth > 1)) { throw ConfigError("SolverConfig: penalty_growth must be > 1"); }
  if (!(violation_reduction > 0 && violation_reduction < 1)) {
    throw ConfigError("SolverConfig: violation_reduction must lie in (0, 1)");
  }
  if (!(armijo > 0 && armijo < 0.5) || !(backtrack > 0 && backtrack < 1) || max_backtracks < 1) {
    throw ConfigError("SolverConfig: invalid line-search parameters");
  }
  if (lbfgs_memory < 1) { throw ConfigError("SolverConfig: lbfgs_memory must be >= 1"); }
}

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double violation(const NlpEvaluation & e)
{
  double v = 0.0;
  if (e.c.size() > 0) { v = e.c.cwiseAbs().maxCoeff(); }
  if (e.g.size() > 0) { v = std::max(v, e.g.maxCoeff()); }
  return v;
}

struct Penalty
{
  VectorXd lambda;
  VectorXd mu;
  double rho{1};
};

// PHR augmented Lagrangian
double merit(const NlpEvaluation & e, const Penalty & pen)
{
  double m = e.f + pen.lambda.dot(e.c) + 0.5 * pen.rho * e.c.squaredNorm();
  for (Eigen::Index i = 0; i < e.g.size(); ++i) {
    const double s = std::max(0.0, pen.mu[i] + pen.rho * e.g[i]);
    m += (s * s - pen.mu[i] * pen.mu[i]) / (2.0 * pen.rho);
  }
  return m;
}

VectorXd shifted_mu(const NlpEvaluation & e, const Penalty & pen)
{
  return (pen.mu + pen.rho * e.g).cwiseMax(0.0);
}

VectorXd lagrangian_gradient(const NlpEvaluation & e, const VectorXd & lambda, const VectorXd & mu)
{
  VectorXd g = e.grad;
  if (e.c.size() > 0) { g += e.jc.transpose() * lambda; }
  if (e.g.size() > 0) { g += e.jg.transpose() * mu; }
  return g;
}

VectorXd merit_gradient(const NlpEvaluation & e, const Penalty & pen)
{
  return lagrangian_gradient(e, pen.lambda + pen.rho * e.c, shifted_mu(e, pen));
}

bool finite(const NlpEvaluation & e, bool derivatives)
{
  if (!std::isfinite(e.f) || !e.c.allFinite() || !e.g.allFinite()) { return false; }
  return !derivatives || e.grad.allFinite();
}

class AugLag
{
public:
  AugLag(const NlpProblem & p, const SolverConfig & cfg) : p_(p), cfg_(cfg)
  {
    n_ = p.num_variables();
    p.bounds(lo_, hi_);
    if (lo_.size() != n_ || hi_.size() != n_ || (lo_.array() > hi_.array()).any()) {
      throw ConfigError("solve_auglag: inconsistent bounds");
    }
    blocks_ = p.separable_blocks();
    block_of_.assign(n_, {-1, -1});
    for (int b = 0; b < static_cast<int>(blocks_.size()); ++b) {
      for (int k = 0; k < static_cast<int>(blocks_[b].size()); ++k) { block_of_[blocks_[b][k]] = {b, k}; }
    }
    for (int i = 0; i < n_; ++i) {
      if (block_of_[i].first < 0) {
        block_of_[i] = {static_cast<int>(blocks_.size()), 0};
        blocks_.push_back({i});
      }
    }
    const VectorXd d0 = p.initial_hessian_diagonal();
    for (const auto & blk : blocks_) {
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(blk.size(), blk.size());
      for (std::size_t k = 0; k < blk.size(); ++k) { B(k, k) = d0[blk[k]] > 0 ? d0[blk[k]] : 1.0; }
      hess_.push_back(std::move(B));
    }
  }

  SolveResult run(const VectorXd & w0, const Multipliers * warm)
  {
    const auto start = std::chrono::steady_clock::now();
    SolveResult res;
    if (w0.size() != n_) { throw std::invalid_argument("solve_auglag: w0 has the wrong dimension"); }

    pen_.rho = cfg_.initial_penalty;
    pen_.lambda = VectorXd::Zero(p_.num_equalities());
    pen_.mu = VectorXd::Zero(p_.num_inequalities());
    if (warm != nullptr) {
      if (warm->lambda.size() == pen_.lambda.size()) { pen_.lambda = clip(warm->lambda); }
      if (warm->mu.size() == pen_.mu.size()) { pen_.mu = clip(warm->mu).cwiseMax(0.0); }
    }

    VectorXd w = project(w0);
    NlpEvaluation ev;
    if (!try_evaluate(w, true, ev)) {
      // a pinned variable outside its box can make w0 itself unusable
      res.w = w;
      res.lambda = pen_.lambda;
      res.mu = pen_.mu;
      res.outcome.status = SolveStatus::numerical_failure;
      res.outcome.wall_time = seconds_since(start);
      return res;
    }
    consider_feasible(w, ev, res);

    SolveStatus status = SolveStatus::iteration_limit;
    double prev_violation = violation(ev);
    // relative to the initial gradient so small-scale problems are not declared solved at once
    const double g0 = projected_norm(w, merit_gradient(ev, pen_));
    double inner_tol = std::max(cfg_.optimality_tolerance, 1e-2 * std::min(1.0, g0));
    int stalled = 0;
    int outer = 0;
    double kkt = inf;
    for (outer = 1; outer <= cfg_.max_outer_iterations; ++outer) {
      const auto inner = minimize(w, ev, inner_tol);
      res.outcome.inner_iterations += inner.iterations;
      if (inner.failed) {
        status = SolveStatus::numerical_failure;
        break;
      }
      consider_feasible(w, ev, res);

      const double viol = violation(ev);
      pen_.lambda = clip(pen_.lambda + pen_.rho * ev.c);
      pen_.mu = clip(shifted_mu(ev, pen_));
      kkt = projected_norm(w, lagrangian_gradient(ev, pen_.lambda, pen_.mu));
      double compl_res = 0.0;
      for (Eigen::Index i = 0; i < ev.g.size(); ++i) {
        compl_res = std::max(compl_res, std::abs(std::min(-ev.g[i], pen_.mu[i])));
      }
      if (cfg_.verbosity > 0 && cfg_.log != nullptr) {
        *cfg_.log << "outer " << std::setw(3) << outer << "  f " << std::setw(14) << std::setprecision(8) << ev.f
                  << "  viol " << std::setw(10) << std::setprecision(3) << viol << "  kkt " << std::setw(10) << kkt
                  << "  rho " << std::setw(8) << pen_.rho << "  inner " << inner.iterations << '\n';
      }
      if (viol <= cfg_.constraint_tolerance && kkt <= cfg_.optimality_tolerance
          && compl_res <= cfg_.optimality_tolerance) {
        status = SolveStatus::optimal;
        break;
      }
      if (viol > cfg_.constraint_tolerance && viol > cfg_.violation_reduction * prev_violation) {
        if (pen_.rho >= cfg_.max_penalty) {
          if (++stalled >= 3 && viol > cfg_.feasible_tolerance) {
            status = SolveStatus::infeasible;
            break;
          }
        }
        pen_.rho = std::min(pen_.rho * cfg_.penalty_growth, cfg_.max_penalty);
      } else {
        stalled = 0;
      }
      prev_violation = viol;
      inner_tol = std::max(cfg_.optimality_tolerance, 0.1 * inner_tol);
    }

    res.w = w;
    res.lambda = pen_.lambda;
    res.mu = pen_.mu;
    res.outcome.status = status;
    res.outcome.outer_iterations = std::min(outer, cfg_.max_outer_iterations);
    res.outcome.objective = ev.f;
    res.outcome.constraint_violation = violation(ev);
    res.outcome.kkt_residual = kkt;
    res.outcome.has_feasible = res.best_feasible.size() > 0;

    // never hand back something worse than a feasible point already seen
    if (status == SolveStatus::optimal && strict_.size() > 0
        && ev.f > strict_f_ + 1e-10 * (1.0 + std::abs(strict_f_))) {
      NlpEvaluation best;
      p_.evaluate(strict_, false, best);
      res.w = strict_;
      res.outcome.status = SolveStatus::feasible_suboptimal;
      res.outcome.objective = best.f;
      res.outcome.constraint_violation = violation(best);
    }
    res.outcome.wall_time = seconds_since(start);
    return res;
  }

private:
  struct InnerResult
  {
    int iterations{0};
    bool failed{false};
  };

  static double seconds_since(std::chrono::steady_clock::time_point t0)
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  VectorXd clip(const VectorXd & v) const { return v.cwiseMax(-cfg_.max_multiplier).cwiseMin(cfg_.max_multiplier); }

  VectorXd project(const VectorXd & w) const { return w.cwiseMax(lo_).cwiseMin(hi_); }

  double projected_norm(const VectorXd & w, const VectorXd & grad) const
  {
    if (n_ == 0) { return 0.0; }
    return (project(w - grad) - w).cwiseAbs().maxCoeff();
  }

  bool try_evaluate(const VectorXd & w, bool derivatives, NlpEvaluation & ev) const
  {
    try {
      p_.evaluate(w, derivatives, ev);
    } catch (const NumericalError &) {
      return false;
    }
    return finite(ev, derivatives);
  }

  void consider_feasible(const VectorXd & w, const NlpEvaluation & ev, SolveResult & res)
  {
    if (violation(ev) <= cfg_.constraint_tolerance && (strict_.size() == 0 || ev.f < strict_f_)) {
      strict_ = w;
      strict_f_ = ev.f;
    }
    if (violation(ev) > cfg_.feasible_tolerance) { return; }
    if (res.best_feasible.size() == 0 || ev.f < res.best_feasible_objective) {
      res.best_feasible = w;
      res.best_feasible_objective = ev.f;
    }
  }

  std::vector<char> active_set(const VectorXd & w, const VectorXd & grad) const
  {
    const double eps = std::min(1e-8, projected_norm(w, grad));
    std::vector<char> active(n_, 0);
    for (int i = 0; i < n_; ++i) {
      active[i] = (w[i] <= lo_[i] + eps && grad[i] > 0) || (w[i] >= hi_[i] - eps && grad[i] < 0);
    }
    return active;
  }

  // Newton-type direction with the active bounds frozen
  VectorXd newton_direction(const NlpEvaluation & ev, const VectorXd & grad, const std::vector<char> & active)
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto & blk = blocks_[b];
      for (std::size_t i = 0; i < blk.size(); ++i) {
        for (std::size_t j = 0; j < blk.size(); ++j) { trip.emplace_back(blk[i], blk[j], hess_[b](i, j)); }
      }
    }
    SparseMatrix H(n_, n_);
    H.setFromTriplets(trip.begin(), trip.end());
    if (ev.c.size() > 0) { H += pen_.rho * SparseMatrix(ev.jc.transpose() * ev.jc); }
    if (ev.g.size() > 0) {
      const VectorXd s = shifted_mu(ev, pen_);
      SparseMatrix D(ev.g.size(), ev.g.size());
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > 0) { D.insert(i, i) = pen_.rho; }
      }
      H += SparseMatrix(ev.jg.transpose() * D * ev.jg);
    }

    std::vector<Eigen::Triplet<double>> red;
    double max_diag = 1.0;
    for (int k = 0; k < H.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(H, k); it; ++it) {
        const int r = static_cast<int>(it.row());
        const int c = static_cast<int>(it.col());
        if (r == c) { max_diag = std::max(max_diag, std::abs(it.value())); }
        if (r == c || (!active[r] && !active[c])) { red.emplace_back(r, c, it.value()); }
      }
    }

    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    double tau = 0.0;
    for (int attempt = 0; attempt < 30; ++attempt) {
      std::vector<Eigen::Triplet<double>> t = red;
      for (int i = 0; i < n_; ++i) { t.emplace_back(i, i, tau + 1e-14 * max_diag); }
      SparseMatrix Hr(n_, n_);
      Hr.setFromTriplets(t.begin(), t.end());
      ldlt.compute(Hr);
      if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0) {
        VectorXd d = ldlt.solve(-grad);
        if (d.allFinite()) { return d; }
      }
      tau = tau == 0.0 ? 1e-8 * max_diag : tau * 10.0;
    }
    return -grad;
  }

  VectorXd lbfgs_direction(const VectorXd & grad, const std::vector<char> & active) const
  {
    VectorXd q = grad;
    for (int i = 0; i < n_; ++i) {
      if (active[i]) { q[i] = 0.0; }
    }
    std::vector<double> alpha(mem_s_.size());
    for (int k = static_cast<int>(mem_s_.size()) - 1; k >= 0; --k) {
      alpha[k] = mem_s_[k].dot(q) / mem_s_[k].dot(mem_y_[k]);
      q -= alpha[k] * mem_y_[k];
    }
    double gamma = 1.0;
    if (!mem_s_.empty()) { gamma = mem_s_.back().dot(mem_y_.back()) / mem_y_.back().squaredNorm(); }
    q *= gamma;
    for (std::size_t k = 0; k < mem_s_.size(); ++k) {
      const double beta = mem_y_[k].dot(q) / mem_s_[k].dot(mem_y_[k]);
      q += (alpha[k] - beta) * mem_s_[k];
    }
    VectorXd d = -q;
    for (int i = 0; i < n_; ++i) {
      if (active[i]) { d[i] = -gamma * grad[i]; }
    }
    return d;
  }

  void update_partitioned(const VectorXd & s, const NlpEvaluation & old_ev, const NlpEvaluation & new_ev)
  {
    // curvature of f + l'c + m'g with the multipliers frozen at the new point
    const VectorXd lam = pen_.lambda + pen_.rho * new_ev.c;
    const VectorXd mu = shifted_mu(new_ev, pen_);
    const VectorXd y = lagrangian_gradient(new_ev, lam, mu) - lagrangian_gradient(old_ev, lam, mu);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const auto & blk = blocks_[b];
      const int m = static_cast<int>(blk.size());
      VectorXd sb(m);
      VectorXd yb(m);
      for (int k = 0; k < m; ++k) {
        sb[k] = s[blk[k]];
        yb[k] = y[blk[k]];
      }
      if (sb.squaredNorm() < 1e-24) { continue; }
      Eigen::MatrixXd & B = hess_[b];
      const VectorXd Bs = B * sb;
      const double sBs = sb.dot(Bs);
      if (!(sBs > 1e-300)) { continue; }
      double sy = sb.dot(yb);
      if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        yb = theta * yb + (1.0 - theta) * Bs;
        sy = sb.dot(yb);
      }
      if (!(sy > 0)) { continue; }
      B += yb * yb.transpose() / sy - Bs * Bs.transpose() / sBs;
    }
  }

  void finite_difference_blocks(const VectorXd & w, const NlpEvaluation & ev)
  {
    const VectorXd lam = pen_.lambda + pen_.rho * ev.c;
    const VectorXd mu = shifted_mu(ev, pen_);
    const VectorXd base = lagrangian_gradient(ev, lam, mu);
    std::size_t width = 0;
    for (const auto & blk : blocks_) { width = std::max(width, blk.size()); }
    std::vector<double> step(n_);
    for (int i = 0; i < n_; ++i) { step[i] = 1e-7 * std::max(1.0, std::abs(w[i])); }
    for (std::size_t j = 0; j < width; ++j) {
      VectorXd wp = w;
      for (const auto & blk : blocks_) {
        if (j < blk.size()) { wp[blk[j]] += step[blk[j]]; }
      }
      NlpEvaluation pev;
      if (!try_evaluate(wp, true, pev)) { continue; }
      const VectorXd gp = lagrangian_gradient(pev, lam, mu);
      for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto & blk = blocks_[b];
        if (j >= blk.size()) { continue; }
        for (std::size_t i = 0; i < blk.size(); ++i) {
          hess_[b](i, j) = (gp[blk[i]] - base[blk[i]]) / step[blk[j]];
        }
      }
    }
    for (auto & H : hess_) { H = (0.5 * (H + H.transpose())).eval(); }
  }

  void update_lbfgs(const VectorXd & s, const VectorXd & y)
  {
    if (s.dot(y) <= 1e-10 * s.norm() * y.norm()) { return; }
    mem_s_.push_back(s);
    mem_y_.push_back(y);
    if (static_cast<int>(mem_s_.size()) > cfg_.lbfgs_memory) {
      mem_s_.pop_front();
      mem_y_.pop_front();
    }
  }

  InnerResult minimize(VectorXd & w, NlpEvaluation & ev, double tol)
  {
    InnerResult out;
    double phi = merit(ev, pen_);
    VectorXd grad = merit_gradient(ev, pen_);
    mem_s_.clear();
    mem_y_.clear();
    int flat = 0;
    bool gradient_only = false;
    for (int it = 0; it < cfg_.max_inner_iterations; ++it) {
      const double pg = projected_norm(w, grad);
      if (pg <= tol) { break; }
      ++out.iterations;

      const auto active = active_set(w, grad);
      if (cfg_.inner == InnerMethod::projected_newton && cfg_.hessian == HessianApprox::finite_difference
          && !gradient_only) {
        finite_difference_blocks(w, ev);
      }
      VectorXd d = -grad;
      if (!gradient_only) {
        d = cfg_.inner == InnerMethod::projected_newton ? newton_direction(ev, grad, active)
                                                        : lbfgs_direction(grad, active);
        if (grad.dot(project(w + d) - w) >= 0.0) { d = -grad; }
      }

      double alpha = 1.0;
      VectorXd trial;
      NlpEvaluation tev;
      bool accepted = false;
      for (int bt = 0; bt < cfg_.max_backtracks; ++bt) {
        trial = project(w + alpha * d);
        if (try_evaluate(trial, false, tev)) {
          const double tphi = merit(tev, pen_);
          if (std::isfinite(tphi) && tphi <= phi + cfg_.armijo * grad.dot(trial - w)) {
            accepted = true;
            break;
          }
        }
        alpha *= cfg_.backtrack;
      }
      if (!accepted) {
        // fall back to a projected gradient step before giving up
        if (!gradient_only) {
          gradient_only = true;
          mem_s_.clear();
          mem_y_.clear();
          reset_hessian();
          continue;
        }
        break;
      }
      gradient_only = false;

      NlpEvaluation nev;
      if (!try_evaluate(trial, true, nev)) {
        out.failed = true;
        return out;
      }
      const VectorXd s = trial - w;
      const double nphi = merit(nev, pen_);
      const VectorXd ngrad = merit_gradient(nev, pen_);
      if (cfg_.inner == InnerMethod::projected_newton && cfg_.hessian == HessianApprox::bfgs) {
        update_partitioned(s, ev, nev);
      } else {
        update_lbfgs(s, ngrad - grad);
      }
      if (cfg_.verbosity > 1 && cfg_.log != nullptr) {
        *cfg_.log << "  inner " << std::setw(4) << it << "  merit " << std::setprecision(10) << nphi << "  pg "
                  << std::setprecision(3) << pg << "  step " << s.lpNorm<Eigen::Infinity>() << '\n';
      }
      flat = (phi - nphi <= 1e-15 * (1.0 + std::abs(phi))) ? flat + 1 : 0;
      w = trial;
      ev = std::move(nev);
      phi = nphi;
      grad = ngrad;
      if (flat >= 3) { break; }
    }
    return out;
  }

  void reset_hessian()
  {
    const VectorXd d0 = p_.initial_hessian_diagonal();
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      hess_[b].setZero();
      for (std::size_t k = 0; k < blocks_[b].size(); ++k) {
        hess_[b](k, k) = d0[blocks_[b][k]] > 0 ? d0[blocks_[b][k]] : 1.0;
      }
    }
  }

  const NlpProblem & p_;
  const SolverConfig & cfg_;
  int n_{0};
  VectorXd lo_;
  VectorXd hi_;
  std::vector<std::vector<int>> blocks_;
  std::vector<std::pair<int, int>> block_of_;
  std::vector<Eigen::MatrixXd> hess_;
  std::deque<VectorXd> mem_s_;
  std::deque<VectorXd> mem_y_;
  Penalty pen_;
  VectorXd strict_;  ///< best point meeting constraint_tolerance
  double strict_f_{0};
};

}  // namespace

SolveResult solve_auglag(const NlpProblem & p, const VectorXd & w0, const SolverConfig & cfg,
                         const Multipliers * warm)
{
  cfg.validate();
  AugLag solver(p, cfg);
  return solver.run(w0, warm);
}

}  // namespace nhmpc
