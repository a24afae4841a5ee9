#pragma once

#include <stdexcept>
#include <string>

namespace derflex {

// Malformed or out-of-range input data (AGC files, draw profiles, traces).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid experiment configuration (unknown keys, bad values).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A search or selection that cannot be satisfied with the given inputs.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operation requested in a direction the device cannot provide
// (e.g. discharging a water heater).
class UnsupportedDirection : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace derflex
