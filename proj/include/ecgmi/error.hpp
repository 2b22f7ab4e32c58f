#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ecgmi {

enum class ErrorCode {
  MalformedHeader,
  UnsupportedFormat,
  TruncatedData,
  ChecksumMismatch,
  LeadNotFound,
  InvalidCutoff,
  SignalTooShort,
  NoBeatsFound,
  TooFewBeats,
  SegmentTooShort,
  MalformedPgm,
  WrongDimensions,
  ShapeMismatch,
  OddDimensions,
  SingleClassTraining,
  NonFiniteLoss,
  DimensionMismatch,
  EmptyMatrix,
  TooFewItems,
  InvalidArgument,
  MalformedFile,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::LeadNotFound: return "LeadNotFound";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::NoBeatsFound: return "NoBeatsFound";
    case ErrorCode::TooFewBeats: return "TooFewBeats";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::MalformedPgm: return "MalformedPgm";
    case ErrorCode::WrongDimensions: return "WrongDimensions";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddDimensions: return "OddDimensions";
    case ErrorCode::SingleClassTraining: return "SingleClassTraining";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::TooFewItems: return "TooFewItems";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ecgmi
