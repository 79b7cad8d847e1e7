#pragma once

#include <stdexcept>
#include <string>

namespace percept {

// Every failure the engine can report. The C API maps these 1:1 onto its
// status codes, so keep the list append-only.
enum class ErrorCode {
    io = 1,
    parse,
    invalid_shape,
    shape_mismatch,
    invalid_geometry,
    invalid_hyperparameter,
    invalid_label,
    invalid_annotation,
    invalid_config,
    bad_magic,
    bad_version,
    bad_maxval,
    truncated_payload,
    invalid_input,
    unmappable_character,
    invalid_argument,
    internal,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::io: return "io";
        case ErrorCode::parse: return "parse";
        case ErrorCode::invalid_shape: return "invalid-shape";
        case ErrorCode::shape_mismatch: return "shape-mismatch";
        case ErrorCode::invalid_geometry: return "invalid-geometry";
        case ErrorCode::invalid_hyperparameter: return "invalid-hyperparameter";
        case ErrorCode::invalid_label: return "invalid-label";
        case ErrorCode::invalid_annotation: return "invalid-annotation";
        case ErrorCode::invalid_config: return "invalid-config";
        case ErrorCode::bad_magic: return "bad-magic";
        case ErrorCode::bad_version: return "bad-version";
        case ErrorCode::bad_maxval: return "bad-maxval";
        case ErrorCode::truncated_payload: return "truncated-payload";
        case ErrorCode::invalid_input: return "invalid-input";
        case ErrorCode::unmappable_character: return "unmappable-character";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::internal: return "internal";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace percept
