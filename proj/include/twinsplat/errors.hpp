#pragma once

#include <stdexcept>
#include <string>

namespace twinsplat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value lies outside the domain of a parameter (non-finite, negative scale, ...).
class ParameterDomainError : public Error {
public:
    using Error::Error;
};

/// A persisted file does not match its documented layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied data violates an operation's precondition.
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered during a numeric computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Iso-surface extraction produced nothing usable.
class ExtractionError : public Error {
public:
    using Error::Error;
};

/// A dataset manifest refers to missing or inconsistent files.
class IntegrityError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace twinsplat
