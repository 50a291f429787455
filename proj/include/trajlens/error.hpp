#pragma once

#include <stdexcept>
#include <string>

namespace trajlens {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// A statistic is undefined for the given input, e.g. a constant column.
class DegenerateInput : public DataError {
public:
    using DataError::DataError;
};

} // namespace trajlens
