#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace moevox {

// Precision is a build option, not two code paths. Tests and oracles are run
// at 64-bit; 32-bit builds exist for training throughput only.
#ifdef MOEVOX_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

// Error taxonomy mirrored by the CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void warn(const std::string& msg);

}  // namespace moevox
