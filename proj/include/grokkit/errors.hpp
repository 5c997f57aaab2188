#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace grokkit {

/// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range label, token or row index.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Invalid argument or configuration value.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation invoked in the wrong object state (e.g. backward twice).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Config value rejected during parsing; `path` locates the field
/// ("train.lr", "grid.axes[1].values").
class ConfigError : public ArgumentError {
 public:
  ConfigError(std::string path, const std::string& msg)
      : ArgumentError("config " + (path.empty() ? std::string("<root>") : path) + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File ended before the declared payload.
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File written by an unsupported format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Requested item does not exist (e.g. a parameter group).
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace grokkit
