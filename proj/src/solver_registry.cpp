#include <algorithm>
#include <map>
#include <mutex>

#include "nhmpc/errors.hpp"
#include "nhmpc/solver.hpp"

namespace nhmpc {

namespace {

struct Registry
{
  std::mutex lock;
  std::map<std::string, SolverBackend> backends;

  Registry()
  {
    backends[default_backend] = [](const NlpProblem & p, const Eigen::VectorXd & w0, const SolverConfig & cfg,
                                   const Multipliers * warm) {
      SolverConfig c = cfg;
      c.inner = InnerMethod::projected_newton;
      return solve_auglag(p, w0, c, warm);
    };
    backends["builtin-auglag-lbfgs"] = [](const NlpProblem & p, const Eigen::VectorXd & w0,
                                          const SolverConfig & cfg, const Multipliers * warm) {
      SolverConfig c = cfg;
      c.inner = InnerMethod::projected_lbfgs;
      c.max_inner_iterations = std::max(c.max_inner_iterations, 2000);
      return solve_auglag(p, w0, c, warm);
    };
  }
};

Registry & registry()
{
  static Registry r;
  return r;
}

}  // namespace

SolverBackend select_backend(const std::string & name)
{
  auto & r = registry();
  std::lock_guard<std::mutex> guard(r.lock);
  const auto it = r.backends.find(name);
  if (it == r.backends.end()) { throw ConfigError("unknown solver backend '" + name + "'"); }
  return it->second;
}

void register_backend(const std::string & name, SolverBackend backend)
{
  if (name.empty() || !backend) { throw ConfigError("register_backend: empty name or backend"); }
  auto & r = registry();
  std::lock_guard<std::mutex> guard(r.lock);
  r.backends[name] = std::move(backend);
}

std::vector<std::string> backend_names()
{
  auto & r = registry();
  std::lock_guard<std::mutex> guard(r.lock);
  std::vector<std::string> names;
  for (const auto & [name, _] : r.backends) { names.push_back(name); }
  return names;
}

}  // namespace nhmpc
