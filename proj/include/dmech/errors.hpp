#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dmech {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Evaluation produced a non-finite value or left the admissible domain.
struct DomainError : Error {
  using Error::Error;
};

/// Operation requires structure the object does not carry
/// (e.g. a constraint, a generator, an annihilator rule).
struct UnsupportedError : Error {
  using Error::Error;
};

/// A matrix the theory requires to be invertible (or of fixed rank)
/// is numerically singular / rank deficient.
struct RegularityError : Error {
  using Error::Error;
};

/// Boundary inversion failed to reach its tolerance.
struct InversionError : Error {
  InversionError(const std::string& what, double res)
      : Error(what), residual(res) {}
  double residual;
};

/// Two states expected to share a junction configuration do not.
struct AdjacencyError : Error {
  using Error::Error;
};

/// Newton iteration failed; carries the residual trace for post-mortems.
struct SolveError : Error {
  SolveError(const std::string& what, std::vector<double> history,
             int index = -1)
      : Error(what), residual_history(std::move(history)), step_index(index) {}
  std::vector<double> residual_history;
  int step_index;
};

/// Malformed or invalid configuration input.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace dmech
