#include "nhmpc/terminal_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nhmpc/errors.hpp"

namespace nhmpc {

std::string_view to_string(Branch b)
{
  switch (b) {
    case Branch::toward: return "toward";
    case Branch::away: return "away";
    case Branch::origin: return "origin";
    case Branch::none: return "none";
  }
  return "none";
}

double reference_pitch(double x, double z)
{
  if (x == 0.0) { return z <= 0.0 ? 0.0 : std::numbers::pi; }
  return std::atan2(x, -z);
}

double reverse_reference_pitch(double x, double z)
{
  return wrap_angle(reference_pitch(x, z) - std::numbers::pi);
}

TerminalMembership classify_terminal(const State & s, const InputLimits & lim, double tol)
{
  if (!(tol >= 0.0)) { throw std::invalid_argument("classify_terminal: tol must be >= 0"); }

  const double r = s.r();
  const double v = s.speed();
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);

  TerminalMembership m;
  m.residuals[0] = (s.vx * c + s.vz * sn) / std::max(1.0, v);
  m.residuals[1] = (s.x * c + s.z * sn) / std::max(1.0, r);
  m.residuals[2] = (s.x * s.vx + s.z * s.vz + r * v) / std::max(1.0, r * v);
  m.speed_margin = v * v - 2.0 * lim.a_max * r;

  if (r <= tol && v <= tol) {
    m.member = true;
    m.branch = Branch::origin;
    return m;
  }

  // sign of r . e_z: negative when the body axis points at the origin
  const double along = -s.x * sn + s.z * c;
  if (r > tol) { m.branch = along < 0.0 ? Branch::toward : Branch::away; }

  const bool aligned = std::abs(m.residuals[0]) <= tol && std::abs(m.residuals[1]) <= tol
                    && std::abs(m.residuals[2]) <= tol;
  const bool slow = m.speed_margin <= tol * std::max(1.0, 2.0 * lim.a_max * r);
  m.member = aligned && slow && m.branch != Branch::none;
  return m;
}

TerminalSetState reduce(const State & s, const InputLimits & lim, double tol)
{
  const auto m = classify_terminal(s, lim, tol);
  if (!m.member) { throw TerminalSetViolation("reduce: state is not in the terminal set"); }
  const double v = s.speed();
  return {s.r(), s.theta, m.branch == Branch::away ? -v : v};
}

Eigen::Vector3d reduced_rhs(const TerminalSetState & ts, const Control & u, Branch branch)
{
  switch (branch) {
    case Branch::toward: return {-ts.v, u.omega, u.a};
    case Branch::away: return {ts.v, u.omega, u.a};
    default: throw std::invalid_argument("reduced_rhs: branch must be toward or away");
  }
}

}  // namespace nhmpc
