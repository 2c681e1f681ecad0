#pragma once

#include <stdexcept>
#include <string>

namespace jepagrasp {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
  kVerification = 5,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Shape mismatch, bad arguments, infeasible configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(ErrorKind::kConfig, message) {}
};

// Missing/corrupt files, unreadable meshes, write failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorKind::kIo, message) {}
};

// Manifest or checkpoint with an unsupported version or layout.
class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& message) : IoError(message) {}
};

// NaN/Inf produced by an op or fed to the optimizer.
class NumericError : public Error {
 public:
  NumericError(const std::string& op, const std::string& message)
      : Error(ErrorKind::kNumeric, op + ": " + message), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

// Target windows could not be placed; callers reduce num_targets.
class MaskError : public ConfigError {
 public:
  explicit MaskError(const std::string& message) : ConfigError(message) {}
};

class VerificationError : public Error {
 public:
  explicit VerificationError(const std::string& message)
      : Error(ErrorKind::kVerification, message) {}
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kVerification: return "verification";
  }
  return "unknown";
}

}  // namespace jepagrasp
