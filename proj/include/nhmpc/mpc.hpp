#pragma once

/**
 * @file
 * @brief Receding-horizon loop: solve, apply the first control for one period, shift, repeat.
 */

#include <json.hpp>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "nhmpc/ocp.hpp"
#include "nhmpc/solver.hpp"

namespace nhmpc {

struct MpcRecord;

/// Solver defaults for the receding-horizon loop: warm-started problems tolerate a stiff
/// initial penalty, which saves most of the outer iterations.
inline SolverConfig mpc_solver_defaults()
{
  SolverConfig s;
  s.initial_penalty = 1e3;
  return s;
}

struct MpcConfig
{
  OcpConfig ocp{};
  SolverConfig solver{mpc_solver_defaults()};
  double epsilon_r{1e-8};     ///< stop once r^2 < epsilon_r (m^2)
  double max_sim_time{60.0};  ///< s
  std::string backend{default_backend};
  WarmTail tail{WarmTail::auxiliary};
  /// called after every applied control
  std::function<void(const MpcRecord &)> on_record;

  void validate() const;
};

enum class MpcStatus { converged, time_limit, solver_chain_failure };

std::string_view to_string(MpcStatus s);

/// Where the applied control came from.
enum class ControlSource { optimal, best_feasible, auxiliary };

std::string_view to_string(ControlSource s);

struct MpcRecord
{
  double t{0};
  State state;  ///< plant state at t
  Control control;
  double objective{0};  ///< exact objective of the returned solution
  SolveStatus status{SolveStatus::optimal};
  ControlSource source{ControlSource::optimal};
  double solve_time{0};  ///< s
  int outer_iterations{0};
  int inner_iterations{0};
  double max_violation{0};
  double terminal_violation{0};
};

struct MpcTrace
{
  std::vector<MpcRecord> records;
  State final_state;
  double final_time{0};
  MpcStatus status{MpcStatus::time_limit};
  std::string message;

  int iterations() const { return static_cast<int>(records.size()); }
  double total_solve_time() const;

  nlohmann::json summary() const;
};

/// Closed loop from x0 on the nominal plant (same RK4 model as the prediction).
MpcTrace run_mpc(const State & x0, const MpcConfig & cfg);

}  // namespace nhmpc
