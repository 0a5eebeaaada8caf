#pragma once

#include <stdexcept>
#include <string>

namespace kmsig {

// Bad input: config files, CLI arguments, violated type invariants.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure while running: integration divergence, non-finite data, I/O.
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace kmsig
