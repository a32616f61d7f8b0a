// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vidprobe {

enum class ErrorCode {
    kIo,
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kUnsupportedDtype,
    kShape,
    kParse,
    kMissingFrame,
    kInvalidClip,
    kInvalidManifest,
    kDegenerate,
    kEmptyScene,
    kInvariant,
    kInsufficientFrames,
    kEmptyLoss,
    kEmptySplit,
    kMissingBackbone,
    kNoOverlap,
    kEmptyReport,
    kConfig,
    kRetryExhausted,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit path) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace vidprobe
