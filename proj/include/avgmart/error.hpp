#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avgmart {

enum class ErrorKind {
  NonpositiveInterval,
  ZeroSteps,
  NonpositiveParameter,
  ShapeMismatch,
  NonFiniteState,
  CouplingShapeMismatch,
  TimeOrder,
  NonDissipative,
  ProviderDomainError,
  IndexOrder,
  StateSpaceTooLarge,
  NonpositiveHorizon,
  NonpositiveVariance,
  NegativeVariance,
  EmptyEnsemble,
  InvalidChain,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonpositiveInterval: return "NonpositiveInterval";
    case ErrorKind::ZeroSteps: return "ZeroSteps";
    case ErrorKind::NonpositiveParameter: return "NonpositiveParameter";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::CouplingShapeMismatch: return "CouplingShapeMismatch";
    case ErrorKind::TimeOrder: return "TimeOrder";
    case ErrorKind::NonDissipative: return "NonDissipative";
    case ErrorKind::ProviderDomainError: return "ProviderDomainError";
    case ErrorKind::IndexOrder: return "IndexOrder";
    case ErrorKind::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorKind::NonpositiveHorizon: return "NonpositiveHorizon";
    case ErrorKind::NonpositiveVariance: return "NonpositiveVariance";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
    case ErrorKind::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorKind::InvalidChain: return "InvalidChain";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Exception type for every failure raised by the library. The kind is the
/// stable, testable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  Error(ErrorKind kind, const std::string& message, std::size_t path_index)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message + " (path " +
                           std::to_string(path_index) + ")"),
        kind_(kind),
        path_index_(path_index) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Set when the failure happened while generating a specific ensemble path.
  std::optional<std::size_t> path_index() const noexcept { return path_index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> path_index_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace detail
}  // namespace avgmart
