#pragma once

#include <stdexcept>
#include <string>

namespace autoselect {

// Invalid user input: config files, CLI flags, malformed CSV. CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf reached a computation, or training diverged. CLI exit code 2.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// A gradient/metric oracle fixture exceeded its tolerance. CLI exit code 3.
struct OracleError : std::runtime_error {
    explicit OracleError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace autoselect
