#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcf {

// Failure classes used across the library. The CLI maps ConfigError to exit
// code 1 and every other error class to exit code 2.

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidShape : ShapeError {
    using ShapeError::ShapeError;
};

struct NotScalar : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    std::size_t row = 0;
    std::size_t col = 0;
    ParseError(const std::string& msg, std::size_t r, std::size_t c)
        : std::runtime_error(msg + " (row " + std::to_string(r) + ", col " +
                             std::to_string(c) + ")"),
          row(r),
          col(c) {}
};

struct OrderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SplitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidWindow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IOError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mcf
