#pragma once

#include <stdexcept>
#include <string>

namespace erpgan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Numeric argument outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition violation (T not divisible by 16, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problems with input data: missing trials, unknown channels, unknown subjects.
class DataError : public Error {
 public:
  using Error::Error;
};

/// File format problems. `kind` distinguishes the failure for callers and tests.
class FormatError : public Error {
 public:
  enum class Kind {
    missing_file,
    bad_magic,
    version_mismatch,
    truncated,
    extent_mismatch,
    architecture_mismatch,
    parse,
    io,
  };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Training diverged (a loss term became NaN/Inf).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace erpgan
