#pragma once

#include <stdexcept>
#include <string>

namespace srsrr {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input files, malformed configs, unknown keys.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Violated invariants of populations, plans, or estimator preconditions.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// A balance metric or covariance block failed to factor.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& msg, int pivot)
        : Error(msg + " (pivot " + std::to_string(pivot) + ")"), pivot_index(pivot) {}
    int pivot_index;
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace srsrr
