#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace edgenas {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hyperparameter spec or record failed a range or shape check.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A spec document could not be decoded. `field()` names the offending key.
class DecodeError : public Error {
 public:
  DecodeError(std::string field, const std::string& what)
      : Error("field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Underlying persistence failure (I/O, locking, SQL). Retryable.
class StoreError : public Error {
 public:
  using Error::Error;
};

class PermissionDenied : public Error {
 public:
  using Error::Error;
};

class ForeignKeyError : public Error {
 public:
  using Error::Error;
};

/// A benchmark row whose score disagrees with its loss and latency.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class SchemaVersionError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or flag problem; `field()` is the dotted key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// An external command or simulated backend could not produce a result.
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgenas
