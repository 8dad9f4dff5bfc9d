#include "nhmpc/terminal_cost.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "nhmpc/errors.hpp"

namespace nhmpc {

namespace {

using std::numbers::sqrt2;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// speed toward the origin for the given sign convention
double toward_speed(const TerminalSetState & ts, Branch branch)
{
  return branch == Branch::away ? -ts.v : ts.v;
}

void check_admissible(double r, double v, const InputLimits & lim, const char * who)
{
  lim.validate();
  const double bound = 2.0 * lim.a_max * r;
  if (!(r >= 0.0) || !(v >= -1e-12) || v * v > bound * (1.0 + 1e-9) + 1e-300) {
    throw TerminalSetViolation(std::string(who) + ": requires v >= 0 and v^2 <= 2 a_m r");
  }
}

// |theta|^3 and its derivative, exact or smoothed
struct Cube
{
  double value;
  double deriv;
};

Cube exact_cube(double th) { return {std::abs(th * th * th), sign(th) * 3.0 * th * th}; }

Cube smooth_cube(double th, double mu)
{
  const double q = std::sqrt(th * th + mu * mu);
  return {q * q * q - mu * mu * mu, 3.0 * th * q};
}

struct Evaluated
{
  double f;
  double d_r;
  double d_theta;
  double d_v;
  double sigma1;
  double sigma2;
};

// closed form and gradient for sigma2 > 0 (speed v >= 0 toward the origin)
Evaluated evaluate(double r, double th, double v, double a, double w, const Cube & cube,
                   double power_scale)
{
  const double s2 = v * v + 2.0 * a * r;
  const double s1 = 23.0 * v * v + 40.0 * a * a + 46.0 * r * a;
  const double rs2 = std::sqrt(s2);
  const double a2 = a * a;
  const double a3 = a2 * a;
  const double v2 = v * v;
  const double v3 = v2 * v;

  Evaluated e{};
  e.sigma1 = s1;
  e.sigma2 = s2;
  e.f = th * th * (sqrt2 * rs2 - v) / a + cube.value / (3.0 * w)
      + power_scale * sqrt2 * s2 * rs2 * s1 / (240.0 * a3)
      - (v3 / (3.0 * a) + v * r * r / a + 2.0 * v3 * r / (3.0 * a2) + 2.0 * v2 * v3 / (15.0 * a3));

  e.d_r = power_scale * (23.0 * sqrt2 * s2 * rs2 / (120.0 * a2) + sqrt2 * rs2 * s1 / (80.0 * a2))
        - 2.0 * v3 / (3.0 * a2) + sqrt2 * th * th / rs2 - 2.0 * v * r / a;
  e.d_theta = cube.deriv / (3.0 * w) - 2.0 * th * (v / a - sqrt2 * rs2 / a);
  e.d_v = power_scale * (23.0 * sqrt2 * v * s2 * rs2 / (120.0 * a3) + sqrt2 * v * rs2 * s1 / (80.0 * a3))
        - v2 / a - 2.0 * v2 * v2 / (3.0 * a3) - r * r / a - 2.0 * v2 * r / a2
        - th * th * (rs2 - sqrt2 * v) / (a * rs2);
  return e;
}

// Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration on P_n
struct GaussLegendre
{
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(int n)
  {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) { break; }
      }
      nodes[i] = x;
      weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

template<typename Fn>
double integrate(const Fn & fn, double t0, double t1, double panel)
{
  static const GaussLegendre gl(32);
  if (!(t1 > t0)) { return 0.0; }
  const int panels = std::max(1, static_cast<int>(std::ceil((t1 - t0) / panel)));
  const double len = (t1 - t0) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = t0 + (p + 0.5) * len;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      sum += gl.weights[i] * fn(mid + 0.5 * len * gl.nodes[i]);
    }
  }
  return 0.5 * len * sum;
}

}  // namespace

double stage_cost(const State & s)
{
  return s.x * s.x + s.z * s.z + s.vx * s.vx + s.vz * s.vz + s.theta * s.theta;
}

double stage_cost(const TerminalSetState & ts) { return ts.r * ts.r + ts.v * ts.v + ts.theta * ts.theta; }

TerminalCostValue terminal_cost(const TerminalSetState & ts, const InputLimits & lim, Branch branch,
                                const TerminalCostOptions & opt)
{
  const double v = toward_speed(ts, branch);
  check_admissible(ts.r, v, lim, "terminal_cost");
  const Cube cube = exact_cube(ts.theta);
  if (ts.r == 0.0 && v <= 0.0) { return {cube.value / (3.0 * lim.omega_max), std::nullopt}; }
  const auto e = evaluate(ts.r, ts.theta, std::max(v, 0.0), lim.a_max, lim.omega_max, cube,
                          opt.power_term_scale);
  return {e.f, std::nullopt};
}

TerminalCostValue terminal_cost_oracle(const TerminalSetState & ts, const InputLimits & lim,
                                       double quad_step, Branch branch)
{
  if (!(quad_step > 0.0)) { throw std::invalid_argument("terminal_cost_oracle: quad_step must be > 0"); }
  const double v0 = std::max(toward_speed(ts, branch), 0.0);
  const double r0 = ts.r;
  check_admissible(r0, toward_speed(ts, branch), lim, "terminal_cost_oracle");
  const double a = lim.a_max;
  const double th0 = ts.theta;

  // switching time from a t1^2 + 2 v0 t1 + (v0^2 / (2a) - r0) = 0, larger root
  const double c = v0 * v0 / (2.0 * a) - r0;
  const double disc = std::max(0.0, 4.0 * v0 * v0 - 4.0 * a * c);
  const double t1 = std::max(0.0, (-2.0 * v0 + std::sqrt(disc)) / (2.0 * a));
  const double t2 = 2.0 * t1 + v0 / a;
  const double t3 = t2 + std::abs(th0) / lim.omega_max;

  const double v1 = v0 + a * t1;
  const double r1 = r0 - v0 * t1 - 0.5 * a * t1 * t1;

  auto accelerate = [&](double t) {
    const double v = v0 + a * t;
    const double r = r0 - v0 * t - 0.5 * a * t * t;
    return r * r + v * v + th0 * th0;
  };
  auto decelerate = [&](double t) {
    const double s = t - t1;
    const double v = v1 - a * s;
    const double r = r1 - v1 * s + 0.5 * a * s * s;
    return r * r + v * v + th0 * th0;
  };
  auto rotate = [&](double t) {
    const double th = th0 - sign(th0) * lim.omega_max * (t - t2);
    return th * th;
  };

  const std::array<double, 4> parts{integrate(accelerate, 0.0, t1, quad_step),
                                    integrate(decelerate, t1, t2, quad_step),
                                    integrate(rotate, t2, t3, quad_step), 0.0};
  return {parts[0] + parts[1] + parts[2] + parts[3], parts};
}

double decelerate_integral_closed_form(double r, double v, double theta, double t1, double t2,
                                       double a_max)
{
  const double a = a_max;
  const double T1 = t1;
  const double T2 = t2;
  const double t1_2 = T1 * T1;
  const double t2_2 = T2 * T2;
  const double am2 = (13.0 * t1_2 * t1_2 / 20.0 - 47.0 * T2 * t1_2 * T1 / 20.0
                      + (73.0 * t2_2 / 20.0 + 7.0) * t1_2 + (-27.0 / 20.0 * t2_2 * T2 - 5.0 * T2) * T1
                      + 3.0 * t2_2 * t2_2 / 20.0 + t2_2)
                   * a * a;
  const double am1 = (v * t1_2 * T1 / 4.0 + (v * T2 / 4.0 + r) * t1_2
                      + (13.0 / 4.0 * v * t2_2 - 5.0 * r * T2 + 9.0 * v) * T1 - 3.0 * v * t2_2 * T2 / 4.0
                      + r * t2_2 - 3.0 * v * T2)
                   * a;
  const double am0 = v * v * t1_2 + v * (v * T2 - 3.0 * r) * T1 + v * v * t2_2 - 3.0 * v * r * T2
                   + 3.0 * v * v + 3.0 * r * r;
  return theta * theta * (T2 - T1) + (T2 - T1) / 3.0 * (am2 + am1 + am0);
}

TerminalCostGradient terminal_cost_gradient(const TerminalSetState & ts, const InputLimits & lim,
                                            Branch branch, const TerminalCostOptions & opt)
{
  const double v = toward_speed(ts, branch);
  check_admissible(ts.r, v, lim, "terminal_cost_gradient");
  const Cube cube = exact_cube(ts.theta);
  TerminalCostGradient g;
  if (ts.r == 0.0 && v <= 0.0) {
    g.d_theta = cube.deriv / (3.0 * lim.omega_max);
    g.sigma1 = 40.0 * lim.a_max * lim.a_max;
    return g;
  }
  const auto e = evaluate(ts.r, ts.theta, std::max(v, 0.0), lim.a_max, lim.omega_max, cube,
                          opt.power_term_scale);
  if (!std::isfinite(e.d_r) || !std::isfinite(e.d_theta) || !std::isfinite(e.d_v)) {
    throw NumericalError("terminal_cost_gradient: non-finite gradient");
  }
  g.d_r = e.d_r;
  g.d_theta = e.d_theta;
  g.d_v = branch == Branch::away ? -e.d_v : e.d_v;
  g.sigma1 = e.sigma1;
  g.sigma2 = e.sigma2;
  return g;
}

double terminal_cost_time_derivative(const TerminalSetState & ts, const Control & u,
                                     const InputLimits & lim, Branch branch,
                                     const TerminalCostOptions & opt)
{
  const auto g = terminal_cost_gradient(ts, lim, branch, opt);
  const Branch dyn = branch == Branch::away ? Branch::away : Branch::toward;
  const Eigen::Vector3d f = reduced_rhs(ts, u, dyn);
  return g.d_r * f[0] + g.d_theta * f[1] + g.d_v * f[2];
}

std::array<double, 4> terminal_cost_smooth(double r, double theta, double v, const InputLimits & lim,
                                           double mu)
{
  const auto e = evaluate(r, theta, v, lim.a_max, lim.omega_max, smooth_cube(theta, mu), 1.0);
  return {e.f, e.d_r, e.d_theta, e.d_v};
}

}  // namespace nhmpc
