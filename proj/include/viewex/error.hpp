#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace viewex {

/// Failure categories surfaced by the library. The CLI maps these onto exit codes.
enum class ErrorKind {
  NotFound,
  ParseError,
  SchemaViolation,
  DomainError,
  InsufficientData,
  InsufficientClassMembers,
  ImpossiblePerturbation,
  SpaceTooLarge,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::InsufficientClassMembers: return "InsufficientClassMembers";
    case ErrorKind::ImpossiblePerturbation: return "ImpossiblePerturbation";
    case ErrorKind::SpaceTooLarge: return "SpaceTooLarge";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace viewex
