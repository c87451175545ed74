// Copyright (C) 2026 The instedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace instedit {

/// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorKind {
    Config,     // bad configuration values or keys
    Data,       // malformed, missing or inconsistent input data
    Numerical,  // non-finite values or violated numeric preconditions
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error(ErrorKind::Config, message) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& message) : Error(ErrorKind::Data, message) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& message) : Error(ErrorKind::Numerical, message) {}
};

/// Rethrows `e` as the same error class with `prefix` prepended to its message.
[[noreturn]] inline void rethrow_with_prefix(const Error& e, const std::string& prefix) {
    const std::string message = prefix + e.what();
    switch (e.kind()) {
        case ErrorKind::Config:
            throw ConfigError(message);
        case ErrorKind::Data:
            throw DataError(message);
        case ErrorKind::Numerical:
            throw NumericalError(message);
    }
    throw Error(e.kind(), message);
}

}  // namespace instedit

#define INSTEDIT_CHECK(cond, ErrType, msg)        \
    do {                                          \
        if (!(cond)) {                            \
            throw ::instedit::ErrType(msg);       \
        }                                         \
    } while (false)
