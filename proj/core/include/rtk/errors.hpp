#pragma once

#include <stdexcept>
#include <string>

namespace rtk {

// Bad arguments, malformed files, dimension mismatches. The CLI maps these
// to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Failures of the numerics themselves. The CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotSpdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BreakdownError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ScheduleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Input that makes a formula undefined, e.g. a zero improvement where a
// normalizer is required.
class DegenerateInputError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class MaxIterationsError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace rtk
