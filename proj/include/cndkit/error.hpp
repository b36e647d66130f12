#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cnd {

enum class ErrorCode {
    DuplicateId,
    UnknownInput,
    ArityMismatch,
    InvalidAttribute,
    InvalidGraph,
    CycleDetected,
    ShapeMismatch,
    NonPositiveDim,
    ParseError,
    SchemaVersionUnsupported,
    InvalidFireSpec,
    UnknownModuleTag,
    ResidualShapeBroken,
    RangeError,
    EmptyInput,
    InvalidArgument,
    IoError,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::UnknownInput: return "UnknownInput";
        case ErrorCode::ArityMismatch: return "ArityMismatch";
        case ErrorCode::InvalidAttribute: return "InvalidAttribute";
        case ErrorCode::InvalidGraph: return "InvalidGraph";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonPositiveDim: return "NonPositiveDim";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaVersionUnsupported: return "SchemaVersionUnsupported";
        case ErrorCode::InvalidFireSpec: return "InvalidFireSpec";
        case ErrorCode::UnknownModuleTag: return "UnknownModuleTag";
        case ErrorCode::ResidualShapeBroken: return "ResidualShapeBroken";
        case ErrorCode::RangeError: return "RangeError";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure in the library is reported through this type; `code()`
/// identifies the category so callers (the CLI in particular) can map it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace cnd
