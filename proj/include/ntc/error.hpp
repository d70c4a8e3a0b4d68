#pragma once

#include <stdexcept>
#include <string>

namespace ntc {

// Caller misuse: bad arguments, mismatched shapes, malformed command lines.
// Mapped to exit code 2 by the CLI.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration (network wiring, config file contents).
struct ConfigError : UsageError {
    using UsageError::UsageError;
};

// Corrupt or inconsistent data: broken containers, codec streams, weight
// files. Mapped to exit code 3 by the CLI.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ntc
