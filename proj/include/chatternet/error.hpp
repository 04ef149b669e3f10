#pragma once

#include <stdexcept>
#include <string>

namespace chatternet {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { usage = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

/// Invalid configuration or flag combination.
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Unreadable, malformed or inconsistent input data.
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Non-finite values during training or evaluation.
struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

}  // namespace chatternet
