#include "gcmr/error.hpp"

namespace gcmr {

const char* to_string(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::bad_magic: return "bad magic";
        case FormatErrorKind::version_mismatch: return "version mismatch";
        case FormatErrorKind::truncated: return "truncated file";
        case FormatErrorKind::dimension_mismatch: return "dimension mismatch";
        case FormatErrorKind::checksum_mismatch: return "checksum mismatch";
        case FormatErrorKind::malformed: return "malformed content";
    }
    return "unknown";
}

FormatError::FormatError(FormatErrorKind kind, std::uint64_t offset, const std::string& what)
    : Error(std::string(to_string(kind)) + " at offset " + std::to_string(offset) + ": " + what),
      kind(kind),
      offset(offset) {}

}  // namespace gcmr
