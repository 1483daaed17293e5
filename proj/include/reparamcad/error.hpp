#pragma once

#include <stdexcept>
#include <string>

namespace reparamcad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violates a type invariant (bad scale, wrong dimension, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A vector length does not match the owning model or space.
class DimensionMismatch : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// A projection produced a parameter vector outside the valid region
/// (non-positive scale).
class InfeasibleProjection : public Error {
public:
    using Error::Error;
};

/// Document parsing or schema failure.
class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace reparamcad
