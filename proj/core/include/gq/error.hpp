// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gq {

enum class ErrorCode {
  NotPositiveDefinite,
  DimensionMismatch,
  InvalidSize,
  NonFinite,
  DivergedLoss,
  EmptyCalibration,
  PartitionMismatch,
  TooFewDistinctPoints,
  ZeroDiagonal,
  TooLarge,
  CorruptFile,
  UnsupportedDtype,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const char* what) {
  if (!cond) fail(code, what);
}

}  // namespace gq
