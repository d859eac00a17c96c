#pragma once

#include <stdexcept>
#include <string>

namespace nnaee {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string &what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  /// Short machine-parseable category, e.g. "placement" or "truncation".
  const std::string &kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class InvalidArgument : public Error {
public:
  explicit InvalidArgument(const std::string &what) : Error("invalid-argument", what) {}
};

class DimensionError : public Error {
public:
  explicit DimensionError(const std::string &what) : Error("dimension", what) {}
};

class PlacementError : public Error {
public:
  explicit PlacementError(const std::string &what) : Error("placement", what) {}
};

class ResamplingError : public Error {
public:
  explicit ResamplingError(const std::string &what) : Error("resampling", what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string &what) : Error("config", what) {}
};

class InstabilityError : public Error {
public:
  explicit InstabilityError(const std::string &what) : Error("instability", what) {}
};

class DivergenceError : public Error {
public:
  DivergenceError(const std::string &what, int epoch)
      : Error("divergence", what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

private:
  int epoch_;
};

/// File-level failures. The offending path is always part of the message.
class StoreError : public Error {
public:
  StoreError(std::string kind, const std::string &path, const std::string &what)
      : Error(std::move(kind), path + ": " + what), path_(path) {}
  const std::string &path() const noexcept { return path_; }

private:
  std::string path_;
};

class CorruptionError : public StoreError {
public:
  CorruptionError(const std::string &path, const std::string &what)
      : StoreError("corruption", path, what) {}
};

class TruncationError : public StoreError {
public:
  TruncationError(const std::string &path, const std::string &what)
      : StoreError("truncation", path, what) {}
};

class VersionError : public StoreError {
public:
  VersionError(const std::string &path, const std::string &what)
      : StoreError("version", path, what) {}
};

class IoError : public StoreError {
public:
  IoError(const std::string &path, const std::string &what) : StoreError("io", path, what) {}
};

} // namespace nnaee
