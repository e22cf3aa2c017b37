#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace exdr {

enum class ErrorCode {
  MalformedRecord,
  DuplicateId,
  UnknownFineLabel,
  UnknownBinaryLabel,
  UnparseableResponse,
  BackendUnavailable,
  MissingLogprobs,
  MissingFixture,
  DimMismatch,
  ZeroVector,
  NonFiniteInput,
  EmptyPool,
  EmptyIndex,
  EmptyCache,
  NoPositivePool,
  NoNegativePool,
  MissingCorpusEntry,
  LengthMismatch,
  Empty,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the engine; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace exdr
