// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every mdsum module.

#pragma once

#include <stdexcept>
#include <string>

namespace mdsum {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An id or index falls outside its valid range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A value outside the mathematical domain of a function (e.g. k < 1).
class DomainError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf produced where only finite values are allowed.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_ = 0;
};

/// Input is well-formed but violates a structural invariant (tree shape, offsets).
class StructuralError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace mdsum
