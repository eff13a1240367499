#pragma once

#include <stdexcept>
#include <string>

namespace wsib {

/// Failure category. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  usage = 1,
  data = 2,
  backend = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& what) { throw Error(ErrorKind::usage, what); }
[[noreturn]] inline void throw_data(const std::string& what) { throw Error(ErrorKind::data, what); }
[[noreturn]] inline void throw_backend(const std::string& what) { throw Error(ErrorKind::backend, what); }

}  // namespace wsib
