#pragma once

#include <stdexcept>
#include <string>

namespace autoens {

enum class ErrorKind {
    Config,
    Shape,
    Input,
    Numeric,
    State,
    Format,
    Corruption,
    Parse,
    NoSignal,
    CollectionFailure,
    Stratification,
    Io,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return "configuration error";
        case ErrorKind::Shape: return "shape error";
        case ErrorKind::Input: return "input error";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::State: return "state error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Corruption: return "corruption error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::NoSignal: return "no-signal error";
        case ErrorKind::CollectionFailure: return "collection failure";
        case ErrorKind::Stratification: return "stratification error";
        case ErrorKind::Io: return "io error";
    }
    return "error";
}

/// Single exception type for the library; `kind()` tells callers (and the CLI
/// exit-code mapping) which contract was violated.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace autoens
