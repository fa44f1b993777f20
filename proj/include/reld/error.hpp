/// @file error.hpp
/// @brief Exception types shared by every reld module.

#pragma once

#include <stdexcept>
#include <string>

namespace reld {

/// Broad failure classes. The CLI maps these onto process exit codes and the
/// annotation service onto HTTP status codes.
enum class ErrorKind {
    usage,          // bad flags, invalid configuration values
    config,         // structurally invalid configuration (unknown kind, dimension mismatch)
    data,           // malformed or degenerate input data
    endpoint,       // LLM endpoint unreachable or misbehaving
    assessment,     // judge reply could not be parsed after retries
    validation,     // request payload rejected by the annotation service
    authorization,  // rater acting outside their group
    not_found,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* error_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage_error";
        case ErrorKind::config: return "config_error";
        case ErrorKind::data: return "data_error";
        case ErrorKind::endpoint: return "endpoint_error";
        case ErrorKind::assessment: return "assessment_error";
        case ErrorKind::validation: return "validation_error";
        case ErrorKind::authorization: return "authorization_error";
        case ErrorKind::not_found: return "not_found";
    }
    return "error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace reld
