// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace koopman_reach {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Interval division by an interval that contains zero.
class DivisionByZeroInterval : public NumericError {
public:
    using NumericError::NumericError;
};

class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double last_time) : Error(what), last_time_(last_time) {}
    double last_valid_time() const { return last_time_; }

private:
    double last_time_;
};

class FitError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// The δ-sat search hit its box or time budget.
class ResourceExhausted : public Error {
public:
    using Error::Error;
};

}  // namespace koopman_reach
