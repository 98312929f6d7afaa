#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mkdm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A configuration value is invalid or inconsistent with its inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for its input, e.g. AUC over a single class.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Training stopped because the loss stopped being a finite number.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (datasets, caches, vocabularies).
class DataError : public Error {
 public:
  enum class Kind {
    io,
    malformed,
    column_count,
    bad_label,
    duplicate_id,
    missing_id,
    extra_id,
    out_of_range,
    mismatch,
  };

  DataError(Kind kind, const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        kind_(kind),
        line_(line) {}

  Kind kind() const noexcept { return kind_; }
  /// 1-based line number, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

class CheckpointError : public Error {
 public:
  enum class Code {
    io,
    bad_magic,
    unsupported_version,
    truncated,
    bad_dtype,
    malformed,
    mismatch,
  };

  CheckpointError(Code code, const std::string& what) : Error(what), code_(code) {}

  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace mkdm
