#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace robustcoop {

/// Malformed model data: bad probabilities, negative entries, wrong sizes.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Two objects that must agree in shape do not.
class DimensionError : public ModelError {
 public:
  using ModelError::ModelError;
};

/// An argument lies outside the domain of the operation (gamma >= 1, theta
/// outside its box, empty inputs, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
class IterationLimitError : public std::runtime_error {
 public:
  IterationLimitError(const std::string& what, std::size_t iterations, double residual)
      : std::runtime_error(what + " (iterations=" + std::to_string(iterations) +
                           ", residual=" + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

/// A requested grid or pool would exceed the configured size cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Network training produced a non-finite loss.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A verification campaign found a violated inequality.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace robustcoop
