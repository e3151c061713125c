#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace siita {

// Shape or argument mismatch between cooperating objects.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad configuration value; message names the offending field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data. Carries the source location when known.
struct DataError : std::runtime_error {
  DataError(const std::string& what) : std::runtime_error(what) {}
  DataError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

// Objective or metric became non-finite.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace siita
