#pragma once

#include <stdexcept>
#include <string>

namespace nhmpc {

/// Raised when a state handed to a terminal-set routine is outside the terminal set
/// (typically the speed bound V^2 <= 2 a_m r).
class TerminalSetViolation : public std::domain_error
{
public:
  explicit TerminalSetViolation(const std::string & what) : std::domain_error(what) {}
};

/// Non-finite or otherwise unusable numerical values.
class NumericalError : public std::runtime_error
{
public:
  explicit NumericalError(const std::string & what) : std::runtime_error(what) {}
};

/// Invalid configuration (limits, horizon, unknown backend names, ...).
class ConfigError : public std::invalid_argument
{
public:
  explicit ConfigError(const std::string & what) : std::invalid_argument(what) {}
};

}  // namespace nhmpc
