#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phenokit {

enum class ErrorKind {
    InvalidParameter,
    DegenerateAnnotation,
    Parse,
    Validation,
    Shape,
    EmptyForeground,
    OutOfBounds,
    MissingPrediction,
    Conflict,
    EmptyInput,
    Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so the CLI can map it to
// an exit code and a machine-readable report.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace phenokit
