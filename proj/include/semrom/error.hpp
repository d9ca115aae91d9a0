#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace semrom {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or argument-range violation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Inconsistent sizes, index maps or mesh topology.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Degenerate or inverted element mapping.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Linear solve failure. `diagnostic` carries a conditioning hint.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double diagnostic)
      : Error(what), diagnostic_(diagnostic) {}
  double diagnostic() const noexcept { return diagnostic_; }

 private:
  double diagnostic_;
};

/// Iteration did not reach its tolerance; keeps the residual history.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Expression or file syntax error; `position` is a 0-based character offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Time integration blew up; `step` is the step at which growth was detected.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Eigenvector basis too ill-conditioned to reconstruct an operator from.
class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

}  // namespace semrom
