#pragma once

#include <stdexcept>
#include <string>

namespace framecast {

// Exception hierarchy. The CLI maps these onto exit codes:
// usage/config/dimension -> 2, data/io -> 3, evaluation -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct EvalError : Error {
    using Error::Error;
};

}  // namespace framecast
