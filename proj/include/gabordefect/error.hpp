#pragma once

#include <stdexcept>
#include <string>

namespace gabordefect {

enum class ErrorCode {
    InvalidArgument,
    ShapeMismatch,
    FileUnreadable,
    UnsupportedFormat,
    UnsupportedBitDepth,
    EmptyImage,
    FileWrite,
    NonFinite,
    Dataset,
    Checkpoint,
    Config,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure in the library surfaces as this exception; `code()` lets
/// callers tell apart the cases that the message alone would blur.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace gabordefect
