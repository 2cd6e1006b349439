// Copyright Contributors to the splatsr Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace splatsr {

/// Bad argument or violated precondition (dimension mismatch, non-positive scale, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (scene/camera files, images, datasets).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text-format parse failure; the message carries line and field context.
class ParseError : public DataError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A quaternion of (near) zero norm cannot be turned into a rotation.
class DegenerateRotationError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// NaN or Inf surfaced in a loss or gradient during optimization.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace splatsr
