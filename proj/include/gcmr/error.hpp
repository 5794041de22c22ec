#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gcmr {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated precondition (bad size, out-of-range label, malformed config value).
struct InvalidArgument : Error {
    using Error::Error;
};

struct DimensionMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

// NaN/Inf produced by a loss, gradient or parameter update.
struct NumericalError : Error {
    using Error::Error;
};

enum class FormatErrorKind { bad_magic, version_mismatch, truncated, dimension_mismatch, checksum_mismatch, malformed };

const char* to_string(FormatErrorKind kind);

// Raised by every file reader. `offset` is the byte (binary) or line (CSV) where decoding failed.
struct FormatError : Error {
    FormatError(FormatErrorKind kind, std::uint64_t offset, const std::string& what);
    FormatErrorKind kind;
    std::uint64_t offset;
};

}  // namespace gcmr
