#pragma once

#include <stdexcept>
#include <string>

namespace chatcbm {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes (validation 1, backend 2, fixture mismatch 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (length mismatches, unknown labels,
// out-of-range activations, bad files).
class DatasetError : public Error {
public:
    using Error::Error;
};

// DatasetError tied to one input field, e.g. "activations[3]".
class FieldError : public DatasetError {
public:
    FieldError(std::string field, const std::string& what) : DatasetError(what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Invalid configuration or arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

// An operation was invoked in a state that does not allow it.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// Rendered prompt exceeded the configured character cap.
class OversizeError : public Error {
public:
    OversizeError(std::string section, std::size_t size, std::size_t cap)
        : Error("rendered prompt exceeds " + std::to_string(cap) +
                " characters (reached " + std::to_string(size) + ") in section '" + section + "'"),
          section_(std::move(section)) {}

    const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

// Transport or protocol failure talking to a language-model backend.
class BackendError : public Error {
public:
    BackendError(const std::string& what, int attempts = 1, int http_status = 0)
        : Error(what), attempts_(attempts), http_status_(http_status) {}

    int attempts() const noexcept { return attempts_; }
    int http_status() const noexcept { return http_status_; }

private:
    int attempts_;
    int http_status_;
};

// Golden fixture failed schema or content checks.
class FixtureError : public Error {
public:
    using Error::Error;
};

}  // namespace chatcbm
