#pragma once

#include <stdexcept>
#include <string>

namespace streammem {

// Root of every error the library throws. The CLI maps subclasses onto exit
// codes (config -> 1, data -> 2, backend -> 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Anything wrong with input data: dimensions, ordering, file contents.
class DataError : public Error {
public:
    using Error::Error;
};

class DimensionError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateInputError : public DataError {
public:
    using DataError::DataError;
};

class StreamOrderError : public DataError {
public:
    using DataError::DataError;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

// Violated call precondition (bad argument values, inverted ranges, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

} // namespace streammem
