#pragma once

#include <stdexcept>
#include <string>

namespace panodiff {

// Error categories surfaced by the library. The CLI maps them onto exit codes.
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

class InvalidState : public std::logic_error {
 public:
  explicit InvalidState(const std::string& what) : std::logic_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class NotFound : public IoError {
 public:
  explicit NotFound(const std::string& what) : IoError(what) {}
};

class ParseError : public IoError {
 public:
  explicit ParseError(const std::string& what) : IoError(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace panodiff
