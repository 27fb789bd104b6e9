#pragma once

#include <stdexcept>
#include <string>

namespace tscam {

// Base class for all library errors. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor dimension / shape mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid values: NaN inputs, labels out of range, degenerate boxes or vectors.
class ValueError : public Error {
public:
    using Error::Error;
};

// Inconsistent or unsupported configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem failures; message names the path.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed binary containers or checkpoints (bad magic, truncation).
class FormatError : public Error {
public:
    using Error::Error;
};

// Malformed text inputs (manifests, config files); message carries the line number.
class ParseError : public Error {
public:
    using Error::Error;
};

// Thresholding left no foreground pixel to box.
class NoForegroundError : public Error {
public:
    using Error::Error;
};

// Ground-truth records without a matching prediction.
class CoverageError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or gradient during optimization.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Bad command line; CLI maps this to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace tscam
