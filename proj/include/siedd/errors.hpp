#pragma once

#include <stdexcept>
#include <string>

namespace siedd {

// Error taxonomy used across the codec:
//   ConfigError  - invalid hyperparameters or dimensions caught up front
//   ShapeError   - tensor dimension mismatch in an operation
//   StateError   - operation called out of sequence (e.g. stage 2 before stage 1)
//   FormatError  - malformed or corrupted bitstream bytes
//   IoError      - filesystem failures, always carrying the offending path
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace siedd
