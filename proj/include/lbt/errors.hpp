#pragma once

#include <stdexcept>
#include <string>

namespace lbt {

/// Base class for all recoverable errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroVelocity : Error {
  ZeroVelocity() : Error("velocity vector is zero") {}
};

struct OutsideDomain : Error {
  explicit OutsideDomain(const std::string& what) : Error(what) {}
};

struct NotOnBoundary : Error {
  explicit NotOnBoundary(const std::string& what) : Error(what) {}
};

struct GrazingRay : Error {
  explicit GrazingRay(const std::string& what) : Error(what) {}
};

struct CoincidentVelocities : Error {
  CoincidentVelocities() : Error("v and v* coincide; kernel is singular on the diagonal") {}
};

struct ParameterRange : Error {
  explicit ParameterRange(const std::string& what) : Error(what) {}
};

struct BadResolution : Error {
  explicit BadResolution(const std::string& what) : Error(what) {}
};

struct EvaluationFailure : Error {
  explicit EvaluationFailure(const std::string& what) : Error(what) {}
};

struct UndefinedOnGammaMinus : Error {
  explicit UndefinedOnGammaMinus(const std::string& what) : Error(what) {}
};

struct InsufficientScales : Error {
  explicit InsufficientScales(const std::string& what) : Error(what) {}
};

struct NotConverged : Error {
  explicit NotConverged(const std::string& what) : Error(what) {}
};

struct ParseError : Error {
  int line = 0;
  int column = 0;
  ParseError(const std::string& what, int l, int c)
      : Error(what + " (line " + std::to_string(l) + ", column " + std::to_string(c) + ")"),
        line(l), column(c) {}
};

struct ValidationError : Error {
  std::string field;
  ValidationError(const std::string& f, const std::string& what)
      : Error("config field '" + f + "': " + what), field(f) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(what) {}
};

}  // namespace lbt
