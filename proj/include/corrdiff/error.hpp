#pragma once

#include <stdexcept>
#include <string>

namespace corrdiff {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of a mathematical function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Input data or configuration failed validation (bad shapes, missing
/// pairs, malformed files, zero-variance columns, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A fitted or estimated quantity is degenerate (zero variance, identical
/// maxima, correlation at +/-1).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Too few permutation replicates for the requested estimator.
class InsufficientReplicatesError : public Error {
public:
    using Error::Error;
};

} // namespace corrdiff
