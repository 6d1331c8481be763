#pragma once

#include <stdexcept>
#include <string>

namespace valplan {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inputs outside an operation's domain (bad probabilities, non-positive slopes, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Quadrature, root-finding or estimation did not converge.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A (mean, c-statistic) pair no member of the requested family can reproduce.
class IdentificationError : public NumericError {
public:
    IdentificationError(const std::string& what, double c_low, double c_high)
        : NumericError(what), c_low_(c_low), c_high_(c_high) {}

    double achievable_low() const noexcept { return c_low_; }
    double achievable_high() const noexcept { return c_high_; }

private:
    double c_low_;
    double c_high_;
};

/// A sample-size rule cannot be met inside the configured search range.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent configuration; the message names the offending key.
class ConfigError : public Error {
public:
    ConfigError(const std::string& key, const std::string& message)
        : Error(key + ": " + message), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace valplan
