// SPDX-License-Identifier: Apache-2.0
#include "gq/error.hpp"

namespace gq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::EmptyCalibration: return "EmptyCalibration";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::TooFewDistinctPoints: return "TooFewDistinctPoints";
    case ErrorCode::ZeroDiagonal: return "ZeroDiagonal";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace gq
