#pragma once

#include <stdexcept>
#include <string>

namespace rtm {

// Exception hierarchy. The CLI maps each family onto a distinct exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

// Malformed or inconsistent configuration (exit 2).
class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

// Input data that violates the schema or a precondition on data (exit 3).
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

// Numerical failure: non-finite densities, failed initialization (exit 4).
class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

// Argument outside the mathematical domain of a function.
class DomainError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace rtm
