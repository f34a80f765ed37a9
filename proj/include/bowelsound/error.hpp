#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bowelsound {

enum class ErrorKind {
  // input errors (bad files, bad flags)
  Io,
  UnsupportedFormat,
  CorruptHeader,
  ParseError,
  InvalidArgument,
  InvertedInterval,
  WindowTooLong,
  NegativeFrequency,
  SegmentTooShort,
  NonPositiveSigma,
  // contract violations
  EmptyInput,
  NonFiniteInput,
  SingleClassData,
  EmptyObservation,
  DurationTableMissing,
  InfeasibleDecoding,
  DegenerateConfusion,
  LengthMismatch,
  InsufficientSubjects,
  LeakageDetected,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io: return "Io";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvertedInterval: return "InvertedInterval";
    case ErrorKind::WindowTooLong: return "WindowTooLong";
    case ErrorKind::NegativeFrequency: return "NegativeFrequency";
    case ErrorKind::SegmentTooShort: return "SegmentTooShort";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::SingleClassData: return "SingleClassData";
    case ErrorKind::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorKind::EmptyObservation: return "EmptyObservation";
    case ErrorKind::DurationTableMissing: return "DurationTableMissing";
    case ErrorKind::InfeasibleDecoding: return "InfeasibleDecoding";
    case ErrorKind::DegenerateConfusion: return "DegenerateConfusion";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InsufficientSubjects: return "InsufficientSubjects";
    case ErrorKind::LeakageDetected: return "LeakageDetected";
  }
  return "Unknown";
}

/// True for errors caused by unreadable files or bad parameters, as opposed
/// to data that parses fine but violates an operation's contract.
constexpr bool is_input_error(ErrorKind k) {
  return k <= ErrorKind::NonPositiveSigma;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace bowelsound
