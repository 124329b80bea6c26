#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pedal {

/// Base of every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Operation applied to an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Snapshot or embedding layout does not match the engine's layout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

}  // namespace pedal
