#pragma once

#include <stdexcept>
#include <string>

namespace lprnn {

// Error hierarchy. The CLI maps each family onto a fixed exit code.

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class QuantizationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, empty or untokenizable data (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss (exit code 4).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint failed magic/version/length/CRC validation (exit code 5).
class CorruptCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfig = 2;
inline constexpr int kData = 3;
inline constexpr int kDivergence = 4;
inline constexpr int kCorruptCheckpoint = 5;
}  // namespace exit_code

}  // namespace lprnn
