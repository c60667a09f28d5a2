#pragma once

#include <stdexcept>
#include <string>

namespace reenroll {

// Classifies failures so the CLI can map them onto exit codes
// (parse/validation/config -> 2, estimation -> 3).
enum class ErrorKind { parse, validation, estimation, config };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace reenroll
