#pragma once

#include <stdexcept>
#include <string>

namespace lg {

enum class ErrorKind {
    Format,      // malformed input bytes
    Parameter,   // invalid k, T, iteration count, ...
    Validation,  // request-level validation failure
    Degenerate,  // graph node with zero degree
    NotFound,
    Conflict,    // e.g. pool exhausted, nothing to verify
    Integrity,   // corrupt persisted state
    Io,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library. `kind` drives exit codes in the CLI
// and status codes in the service.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace lg
