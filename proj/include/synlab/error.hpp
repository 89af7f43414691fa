#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synlab {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// A precondition on an argument was violated (bad shape, out-of-grid ratio, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

/// Serialized data could not be decoded.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, unknown_version, truncated, corrupt, io };

  FormatError(Kind k, const std::string& what) : Error(what), kind_(k) {}
  Kind format_kind() const noexcept { return kind_; }

  const char* kind() const noexcept override {
    switch (kind_) {
      case Kind::bad_magic: return "bad_magic";
      case Kind::unknown_version: return "unknown_version";
      case Kind::truncated: return "truncated";
      case Kind::corrupt: return "corrupt";
      case Kind::io: return "io";
    }
    return "format";
  }

 private:
  Kind kind_;
};

/// Training produced a non-finite loss or gradient.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  const char* kind() const noexcept override { return "training_failure"; }

 private:
  std::size_t epoch_;
};

/// Malformed experiment configuration.
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::size_t line_;
};

namespace detail {
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}
}  // namespace detail

}  // namespace synlab
