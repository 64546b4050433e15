#pragma once

#include <stdexcept>
#include <string>

namespace splitkit {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shape mismatch (wrong rank, incompatible dimensions).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

// Malformed file contents (checkpoints, datasets, configs).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(what) {}
};

// Non-finite values or numerically impossible requests.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

// Caller passed an argument outside the accepted domain.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

}  // namespace splitkit
