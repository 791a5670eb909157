#pragma once

#include <stdexcept>
#include <string>

namespace gsb {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A label (subsystem, level, observable, experiment name) was not found.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Matrix/vector dimensions do not match the space they claim to act on.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Two objects live on different composite spaces.
class SpaceMismatchError : public Error {
public:
    using Error::Error;
};

/// A physical parameter violates its documented constraints.
class InvalidParameterError : public Error {
public:
    using Error::Error;
};

/// Bad experiment/run configuration (unknown preset, malformed grid, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The adaptive integrator could not satisfy its tolerances.
class IntegratorError : public Error {
public:
    using Error::Error;
};

/// Numerical quadrature failed (non-finite integrand, no convergence).
class IntegrationError : public Error {
public:
    using Error::Error;
};

/// A cross-check between two computation routes failed.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace gsb
