#pragma once

#include <stdexcept>
#include <string>

namespace renoscan {

/// Failure category. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  validation = 2,
  data = 3,
  numeric = 4,
};

/// Recoverable runtime failure (bad input, bad file, non-finite numbers).
/// Caller bugs such as mismatched dimensions throw std::invalid_argument.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace renoscan
