#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace swarm {

/// Bad input: unknown key, malformed value, violated precondition. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public ConfigError {
public:
  using ConfigError::ConfigError;
};

class UnsupportedConfiguration : public ConfigError {
public:
  using ConfigError::ConfigError;
};

/// Failure while computing. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class QuadratureFailure : public NumericalError {
public:
  QuadratureFailure(const std::string& what, double residual)
      : NumericalError(what + " (error estimate " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

private:
  double residual_;
};

class IntegrationDiverged : public NumericalError {
public:
  IntegrationDiverged(const std::string& what, std::uint64_t step)
      : NumericalError(what + " at step " + std::to_string(step)), step_(step) {}
  std::uint64_t step() const { return step_; }

private:
  std::uint64_t step_;
};

class PositivityLoss : public NumericalError {
public:
  PositivityLoss(std::size_t cell, double time)
      : NumericalError("non-positive density in cell " + std::to_string(cell) +
                       " at t=" + std::to_string(time)),
        cell_(cell), time_(time) {}
  std::size_t cell() const { return cell_; }
  double time() const { return time_; }

private:
  std::size_t cell_;
  double time_;
};

class DegeneratePhase : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class UndefinedObservable : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class InsufficientData : public NumericalError {
public:
  using NumericalError::NumericalError;
};

} // namespace swarm
