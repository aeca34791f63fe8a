#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phasor_forge {

enum class ErrorCode {
    InvalidArgument,
    DegeneratePhasor,
    RegionOutOfBounds,
    ZeroReference,
    ModelShapeMismatch,
    DivergedLoss,
    BadMagic,
    TruncatedFile,
    ShapeChainBroken,
    DtypeUnsupported,
    LengthMismatch,
    TooFewDistinctPoints,
    KTooLargeForExactMatching,
    PaletteTooSmall,
    Io,
    Config,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace phasor_forge
