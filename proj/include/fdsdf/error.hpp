#pragma once

#include <stdexcept>
#include <string>

namespace fdsdf {

/// Base class of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Gradient too small to define a normal; the caller skips the point.
class DegenerateGradient : public Error {
 public:
  using Error::Error;
};

/// Input file could not be parsed. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Marching cubes found no sign change.
class EmptySurface : public Error {
 public:
  using Error::Error;
};

/// Point is too close to the medial axis of an analytic field.
class MedialAxisError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdsdf
