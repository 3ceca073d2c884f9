#pragma once

#include <stdexcept>
#include <string>

namespace bufrelay {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Iterative method (quadrature, root finder) failed to meet its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A requested target (e.g. a delay) cannot be met by any admissible parameter.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model, policy, simulation or sweep configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace bufrelay
