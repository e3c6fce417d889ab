#pragma once

#include <stdexcept>
#include <string>

namespace mcflab {

enum class ErrorKind {
  InvalidArgument,
  NonFinite,
  DegreeOverflow,
  NotStarShaped,
  NonConvexInput,
  ConvexityLost,
  StepRejected,
  Blowup,
  TimeInconsistent,
  ShiftTooLarge,
  FrameMismatch,
  SignChange,
  WindowTooShort,
  NonPositive,
  NonPositiveH,
  SlopeMismatch,
  NonMonotoneRadius,
  DirectionOutOfGraph,
  InsufficientResolution,
  NoiseFloor,
  Config,
  VersionMismatch,
  CorruptSnapshot,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` discriminates the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::DegreeOverflow: return "DegreeOverflow";
    case ErrorKind::NotStarShaped: return "NotStarShaped";
    case ErrorKind::NonConvexInput: return "NonConvexInput";
    case ErrorKind::ConvexityLost: return "ConvexityLost";
    case ErrorKind::StepRejected: return "StepRejected";
    case ErrorKind::Blowup: return "Blowup";
    case ErrorKind::TimeInconsistent: return "TimeInconsistent";
    case ErrorKind::ShiftTooLarge: return "ShiftTooLarge";
    case ErrorKind::FrameMismatch: return "FrameMismatch";
    case ErrorKind::SignChange: return "SignChange";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::NonPositive: return "NonPositive";
    case ErrorKind::NonPositiveH: return "NonPositiveH";
    case ErrorKind::SlopeMismatch: return "SlopeMismatch";
    case ErrorKind::NonMonotoneRadius: return "NonMonotoneRadius";
    case ErrorKind::DirectionOutOfGraph: return "DirectionOutOfGraph";
    case ErrorKind::InsufficientResolution: return "InsufficientResolution";
    case ErrorKind::NoiseFloor: return "NoiseFloor";
    case ErrorKind::Config: return "Config";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptSnapshot: return "CorruptSnapshot";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace mcflab
