#pragma once

/**
 * @file
 * @brief Numerical certification of the terminal ingredients (terminal set, stage cost,
 * terminal cost, reachability, Lyapunov decrease) over randomized admissible states.
 */

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhmpc/dynamics.hpp"
#include "nhmpc/terminal_cost.hpp"

namespace nhmpc {

struct ConditionCheck
{
  std::string name;
  bool passed{true};
  double worst{0};      ///< worst residual observed
  double tolerance{0};  ///< threshold the residual is compared against
  std::string note;
  /// first few violating samples, as (r, theta, v) or condition-specific tuples
  std::vector<std::vector<double>> violations;
};

struct StabilityReport
{
  std::vector<ConditionCheck> checks;

  bool passed() const;
  const ConditionCheck * find(const std::string & name) const;
  nlohmann::json to_json() const;
};

struct VerifyOptions
{
  InputLimits limits{};
  int samples{10000};
  std::uint64_t seed{20240417};
  int horizon{61};     ///< prediction horizon in samples
  double delta{0.1};   ///< MPC sampling period (s)
  double r_max{10.0};  ///< sampled distances lie in (0, r_max]
  double lyapunov_tol{1e-8};
  TerminalCostOptions cost{};
};

/// Terminal-set, stage-cost, terminal-cost, reachability and Lyapunov-decrease checks.
StabilityReport verify_stability_conditions(const VerifyOptions & opt);

/// Closed form versus quadrature, |F - F_oracle| / max(1, F_oracle) <= 1e-6, plus the exact
/// rotation-phase identity.
ConditionCheck check_oracle_equivalence(const VerifyOptions & opt);

/// Closed-form gradient versus central differences (step 1e-6, relative 1e-5) on points with
/// sigma2 >= 1e-4.
ConditionCheck check_gradient(const VerifyOptions & opt);

/// Everything above in one report.
StabilityReport run_verification(const VerifyOptions & opt);

}  // namespace nhmpc
