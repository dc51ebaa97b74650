#pragma once

#include <stdexcept>
#include <string>

namespace avgmart::cli {

enum class CliErrorKind { FileNotFound, SchemaError, UnknownKind, IoError };

inline const char* to_string(CliErrorKind kind) {
  switch (kind) {
    case CliErrorKind::FileNotFound: return "FileNotFound";
    case CliErrorKind::SchemaError: return "SchemaError";
    case CliErrorKind::UnknownKind: return "UnknownKind";
    case CliErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Configuration and output failures. `subject` is the offending config key,
/// kind name or file path.
class CliError : public std::runtime_error {
 public:
  CliError(CliErrorKind kind, std::string subject, const std::string& reason)
      : std::runtime_error(std::string(to_string(kind)) + "(\"" + subject + "\", \"" + reason +
                           "\")"),
        kind_(kind),
        subject_(std::move(subject)),
        reason_(reason) {}

  CliErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  CliErrorKind kind_;
  std::string subject_;
  std::string reason_;
};

inline CliError schema_error(std::string key, const std::string& reason) {
  return {CliErrorKind::SchemaError, std::move(key), reason};
}

}  // namespace avgmart::cli
