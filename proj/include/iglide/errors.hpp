#pragma once

#include <stdexcept>
#include <string>

namespace iglide {

// Common base so the CLI can catch every library failure in one place.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file (bad column count, empty file, unreadable row).
class ParseError : public Error {
public:
    using Error::Error;
};

// Structurally valid input that violates a domain constraint
// (wear out of range, rejected unit, empty healthy set).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Bad configuration value (nonpositive dimension, n_samples < 2, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Vector/matrix dimension mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Group specification problems (unknown channel, empty group, overlap).
class SpecError : public Error {
public:
    using Error::Error;
};

// Failure while fitting a model (too few samples, diverged training).
class FitError : public Error {
public:
    using Error::Error;
};

// API called out of order (apply_norm before fit_norm).
class UsageError : public Error {
public:
    using Error::Error;
};

// Operation not defined for the model variant (aleatoric UQ on an AE).
class UnsupportedVariantError : public Error {
public:
    using Error::Error;
};

// Non-finite value while assembling a health-indicator vector.
class AssemblyError : public Error {
public:
    using Error::Error;
};

// Filesystem / serialization failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace iglide
