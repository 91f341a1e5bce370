#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace xcomm {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The transport could not deliver or receive (bind/connect failure, group shut down, bad rank).
class TransportError : public Error {
public:
    using Error::Error;
};

/// A call was made with arguments that violate its contract (bad rank, oversized tag, double consumption, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// One or more required named parameters were not supplied.
class MissingParameterError : public UsageError {
public:
    MissingParameterError(std::string const& operation, std::vector<std::string> missing)
        : UsageError(make_message(operation, missing)),
          missing_(std::move(missing)) {}

    std::vector<std::string> const& missing() const noexcept {
        return missing_;
    }

private:
    static std::string make_message(std::string const& operation, std::vector<std::string> const& missing) {
        std::string msg = operation + ": missing required parameter(s):";
        for (auto const& name: missing) {
            msg += " " + name;
        }
        return msg;
    }

    std::vector<std::string> missing_;
};

/// A receive container is too small under the no_resize policy.
class CapacityError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Counts or displacements failed validation (negative entry, wrong length, cross-rank mismatch, overflow).
class CountsError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Payload bytes could not be decoded into the requested element kind.
class DecodeError : public Error {
public:
    using Error::Error;
};

} // namespace xcomm
