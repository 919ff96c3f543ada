#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace obpc {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class ContractViolation : public Error {
public:
    using Error::Error;
};

/// History segments that do not line up in time.
class ContiguityError : public Error {
public:
    using Error::Error;
};

/// History segments that line up in time but disagree at the junction.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// A state left the finite range during integration.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double time) : Error(what), time_(time) {}
    /// First integration time at which a bad state was produced.
    double time() const noexcept { return time_; }

private:
    double time_;
};

class OptimizationFailure : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// Raised when a certificate's hypotheses do not hold (e.g. a non-Hurwitz matrix).
class CertificateInapplicable : public Error {
public:
    using Error::Error;
};

/// Configuration problems; carries the offending key and, when known, the line.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::string key, std::size_t line = 0)
        : Error(what), key_(std::move(key)), line_(line) {}
    const std::string& key() const noexcept { return key_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

}  // namespace obpc
