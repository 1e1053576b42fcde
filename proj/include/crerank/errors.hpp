#pragma once

#include <stdexcept>
#include <string>

namespace crerank {

// Error taxonomy mirrored by the CLI exit classes (io | format | config |
// training | internal). Kernel misuse throws std::invalid_argument.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCorpusError : FormatError {
  using FormatError::FormatError;
};

}  // namespace crerank
