#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dopcc {

/// Base class of all errors raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or invalid configuration (CLI exit code 2).
class PreconditionError : public Error {
  public:
    using Error::Error;
};

/// Malformed or truncated binary/text input.
class FormatError : public Error {
  public:
    explicit FormatError(const std::string& what,
                         std::optional<std::uint64_t> record = std::nullopt)
        : Error(record ? what + " (record " + std::to_string(*record) + ")" : what),
          record_(record) {}

    std::optional<std::uint64_t> record() const { return record_; }

  private:
    std::optional<std::uint64_t> record_;
};

class IoError : public Error {
  public:
    IoError(const std::string& what, std::uint64_t offset)
        : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

    std::uint64_t offset() const { return offset_; }

  private:
    std::uint64_t offset_;
};

/// Numerical breakdown that could not be recovered (CLI exit code 3).
class NumericError : public Error {
  public:
    using Error::Error;
};

}  // namespace dopcc
