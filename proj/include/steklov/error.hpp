#pragma once

#include <stdexcept>
#include <string>

namespace steklov {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable tag, e.g. "parse" or "inadmissible".
  virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed mesh or weight file; carries the offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  int line_;
};

class TopologyError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "topology"; }
};

class DegenerateTriangleError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate-triangle"; }
};

/// Bad parameter combination (exponents, sizes, mismatched meshes).
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid-argument"; }
};

/// The weight violates the hypotheses needed for a positive principal eigenvalue.
class InadmissibleWeight : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "inadmissible"; }
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non-convergence"; }
};

class Unsupported : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported"; }
};

}  // namespace steklov
