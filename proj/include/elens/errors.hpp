#pragma once

#include <stdexcept>
#include <string>

namespace elens {

// Error categories map one-to-one onto CLI exit codes (see tools/).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad run configuration: missing paths, invalid flag values, bad env vars.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data: files that parse but violate an
// invariant, shape mismatches, unknown labels, degenerate statistics.
class DataError : public Error {
public:
    using Error::Error;
};

class ShapeError : public DataError {
public:
    using DataError::DataError;
};

// Filesystem-level failures: unreadable, unwritable, truncated files.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace elens
