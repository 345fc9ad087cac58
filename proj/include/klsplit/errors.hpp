#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace klsplit {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function (t >= eta, theta out of range, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch or a matrix that should be symmetric and is not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class RankError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Missing or malformed data in a trace or report input.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampler never hit the value band of a KL region.
class RegionEmptyError : public Error {
 public:
  using Error::Error;
};

/// Generic proximal inner solver hit its iteration cap.
class InnerSolverError : public Error {
 public:
  InnerSolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A parameter schedule violates a precondition at index `first_bad_k`.
class ScheduleError : public Error {
 public:
  ScheduleError(const std::string& what, std::size_t first_bad_k)
      : Error(what), first_bad_k_(first_bad_k) {}
  std::size_t first_bad_k() const noexcept { return first_bad_k_; }

 private:
  std::size_t first_bad_k_;
};

}  // namespace klsplit
