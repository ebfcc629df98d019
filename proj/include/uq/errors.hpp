#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uq {

// Usage / flag errors (CLI exit code 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Backend unreachable, protocol failure, capability missing (exit code 2).
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedBackend : BackendError {
    using BackendError::BackendError;
};

// Input data violates a documented invariant (exit code 3).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input line; carries the 1-based line number.
struct ParseError : ValidationError {
    ParseError(const std::string& what, std::size_t line_no)
        : ValidationError(what), line(line_no) {}
    std::size_t line;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// No parseable sample to vote on.
struct VoteFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Constant vector or empty residual: rank correlation has no value.
struct CorrelationUndefined : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Oracle rejection area is zero (all-correct or all-incorrect input).
struct PrrUndefined : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace uq
