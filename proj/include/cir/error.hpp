#pragma once

#include <stdexcept>
#include <string>

namespace cir {

/// Process exit codes shared by every subcommand.
enum class ExitCode : int {
  ok = 0,
  usage = 2,
  data = 3,
  numeric = 4,
  provider = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad flags, invalid configuration, violated preconditions on arguments.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::usage, what) {}
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// NaN/Inf losses, degenerate norms.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::numeric, what) {}
};

/// Caption provider transport failures and contract violations.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error(ExitCode::provider, what) {}
};

enum class FormatFault {
  io,
  bad_magic,
  version_mismatch,
  bad_header,
  truncated,
  duplicate_id,
  non_finite,
};

const char* to_string(FormatFault fault) noexcept;

/// Binary file format violations; `fault()` tells them apart.
class FormatError : public DataError {
 public:
  FormatError(FormatFault fault, const std::string& what);
  FormatFault fault() const noexcept { return fault_; }

 private:
  FormatFault fault_;
};

}  // namespace cir
