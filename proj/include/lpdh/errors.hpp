#pragma once

#include <stdexcept>
#include <string>

namespace lpdh {

// Base for every error raised by the library. The CLI maps all of these to
// exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible (mismatched extents, wrong rank).
class DimensionError : public Error {
public:
    using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

// Non-finite values or a solver that failed to converge.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lpdh
