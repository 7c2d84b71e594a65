#pragma once

#include <stdexcept>
#include <string>

namespace clhpo {

// Error taxonomy used across the library. Callers catch std::exception or
// the specific type when the distinction matters.
struct ArgumentError : std::invalid_argument {
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StreamError : std::runtime_error {
  explicit StreamError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace clhpo
