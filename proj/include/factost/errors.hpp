#pragma once

#include <stdexcept>
#include <string>

namespace factost {

// Error taxonomy mirrored by CLI exit codes:
// config 2, data 3, numeric 4, checkpoint 5.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg)
        : std::runtime_error("checkpoint error: " + msg) {}
};

}  // namespace factost
