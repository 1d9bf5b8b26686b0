#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fcm {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A mask that leaves nothing to attend to or pool over.
class InvalidMaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed dataset input. line() is 1-based, 0 when not tied to a line.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf gradients, failed gradient checks, nondeterministic objectives.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fcm
