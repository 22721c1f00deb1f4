#pragma once

#include <stdexcept>
#include <string>

namespace mgwave {

/// Malformed input: graph documents, configs, invalid parameters.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A computation that started but could not finish: instability, blow-up,
/// degenerate probe geometry.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mgwave
