#pragma once

#include <stdexcept>
#include <string>

namespace augscat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Grid cannot resolve the requested transverse eigenfunctions.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

// Wavenumber or rate line sits on (or too close to) the pencil spectrum.
class ThresholdError : public Error {
 public:
  using Error::Error;
};

class SpectrumCollision : public Error {
 public:
  using Error::Error;
};

// Fixed-point map for the blended problem does not contract.
class ContractionError : public Error {
 public:
  using Error::Error;
};

// Linear system singular to working precision; usually a trapped mode nearby.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, int line = -1, int column = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line + 1) + ", column " +
                              std::to_string(column + 1) + ")"
                        : msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace augscat
