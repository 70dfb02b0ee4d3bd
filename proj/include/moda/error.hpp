#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moda {

enum class ErrorCode {
    ShapeMismatch,
    DimMismatch,
    NonPositiveDepth,
    EmptyAudio,
    NoBody,
    DegenerateContour,
    TooFewPoints,
    CountMismatch,
    TooShort,
    DegeneratePolygon,
    LengthMismatch,
    TooFewSamples,
    InconsistentWindows,
    EmptyReference,
    MissingCheckpoint,
    MissingStream,
    DatasetEmpty,
    NonFiniteLoss,
    ConfigError,
    IoError,
    FormatError,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports carries one of the codes above; the CLI
// maps codes onto process exit statuses.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

}  // namespace moda
