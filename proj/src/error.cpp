#include "cir/error.hpp"

namespace cir {

const char* to_string(FormatFault fault) noexcept {
  switch (fault) {
    case FormatFault::io: return "io";
    case FormatFault::bad_magic: return "bad magic";
    case FormatFault::version_mismatch: return "version mismatch";
    case FormatFault::bad_header: return "bad header";
    case FormatFault::truncated: return "truncated";
    case FormatFault::duplicate_id: return "duplicate id";
    case FormatFault::non_finite: return "non-finite value";
  }
  return "unknown";
}

FormatError::FormatError(FormatFault fault, const std::string& what)
    : DataError(std::string(to_string(fault)) + ": " + what), fault_(fault) {}

}  // namespace cir
