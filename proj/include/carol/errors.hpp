#pragma once

#include <stdexcept>

namespace carol {

// Error taxonomy mirrored by the CLI exit codes: config 2, data 3, numerics 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace carol
