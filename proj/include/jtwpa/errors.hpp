#pragma once

#include <stdexcept>
#include <string>

namespace jtwpa {

/// Argument outside the domain of a physical or numerical operation.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A circuit or device description that cannot be realized.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Potential minimum is not a stable configuration (curvature <= 0).
class UnstableConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newton iteration failed. Carries the simulation time (transient) or the
/// best residual reached (harmonic balance).
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double time, double residual)
      : std::runtime_error(what), time_(time), residual_(residual) {}

  double time() const { return time_; }
  double residual() const { return residual_; }

 private:
  double time_;
  double residual_;
};

/// Requested item (frequency, signal name) is absent from a result.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace jtwpa
