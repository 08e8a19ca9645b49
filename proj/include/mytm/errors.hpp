#pragma once

#include <stdexcept>
#include <string>

namespace mytm {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape or layout violation (wrong matrix dimensions, wrong image resolution).
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Value outside its mathematical domain (zero-norm embedding, non-finite code,
/// age outside [0, 100]).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A pre-trained backend was requested but cannot be loaded.
class BackendUnavailableError : public Error {
public:
    using Error::Error;
};

/// Invalid external input: manifests, config files, checkpoints.
class ValidationError : public Error {
public:
    using Error::Error;
};

} // namespace mytm
