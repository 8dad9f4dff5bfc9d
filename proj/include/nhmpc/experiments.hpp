#pragma once

/**
 * @file
 * @brief Experiment drivers behind the command-line verbs: forward auxiliary simulation,
 * single NMPC run, grid sweep and the stability verification suite.
 *
 * Every run writes its fully resolved configuration as config.json next to its outputs.
 *
 * Trace CSV columns (fixed order): t,x,z,theta,vx,vz,a,omega,objective,status
 */

#include <json.hpp>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nhmpc/aux_controller.hpp"
#include "nhmpc/mpc.hpp"

namespace nhmpc {

enum class ExperimentKind { forward_aux, nmpc_single, nmpc_grid, verify };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_from_string(const std::string & s);

/// Column names of the trace CSV, in order.
const std::vector<std::string> & trace_columns();

struct ExperimentConfig
{
  ExperimentKind experiment{ExperimentKind::nmpc_single};
  InputLimits limits{};
  std::array<double, 2> x0{-4.0, 4.0};
  /// grid starts; empty means {-4,0,4}^2 without the origin
  std::vector<std::array<double, 2>> grid;
  double h{0.1};
  double delta{0.1};
  int horizon{61};
  double eps_r{1e-8};
  double eps_f{0.0};
  double max_sim_time{60.0};
  std::string out_dir{"out"};
  std::uint64_t seed{20240417};
  int jobs{1};
  int verbose{0};
  std::string backend{default_backend};
  /// forward-aux only; empty (auto) picks the smaller initial rotation
  std::optional<Branch> strategy{Branch::toward};
  /// verify only
  int samples{10000};
  /// verify only: scales one term of the terminal cost (mutation check); 1 in production
  double cost_mutation{1.0};

  /// Throws ConfigError when the configuration cannot be resolved to a valid MpcConfig.
  void validate() const;

  MpcConfig mpc_config() const;
  std::vector<std::array<double, 2>> grid_starts() const;

  nlohmann::json to_json() const;
  /// Keys present in @p j override @p base; unknown keys throw ConfigError.
  static ExperimentConfig from_json(const nlohmann::json & j, const ExperimentConfig & base);
  static ExperimentConfig from_json(const nlohmann::json & j);
};

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json & j)
{
  return from_json(j, ExperimentConfig{});
}

/// Write the header and one row per sample. The last state gets a (0, 0) control; the
/// objective column holds the stage cost.
void write_trace_csv(std::ostream & os, const Trajectory & traj, const std::string & status);

/// One row per MPC record plus the final state with the (0, 0) command.
void write_trace_csv(std::ostream & os, const MpcTrace & trace);

struct TraceRow
{
  double t{0};
  State state;
  Control control;
  double objective{0};
  std::string status;
};

/// Parse a trace CSV; throws std::runtime_error naming missing columns or malformed rows.
std::vector<TraceRow> read_trace_csv(std::istream & is);

/// "x>=0", "x<=0" or "both": the half plane hosting the trajectory once it entered the disc
/// of radius @p radius around the origin; "none" if it never did.
std::string damping_half_plane(const MpcTrace & trace, double radius = 0.1);

nlohmann::json forward_summary(const Trajectory & traj, const std::vector<AuxPhase> & phases, Branch strategy);

/// Verbs. Each returns the process exit code and reports diagnostics on @p err.
int cmd_forward(const ExperimentConfig & cfg, std::ostream & err);
int cmd_nmpc(const ExperimentConfig & cfg, std::ostream & err);
int cmd_grid(const ExperimentConfig & cfg, std::ostream & err);
int cmd_verify(const ExperimentConfig & cfg, std::ostream & err);

}  // namespace nhmpc
