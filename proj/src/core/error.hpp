// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace laborflow {

/// Failure categories. The first three are caller mistakes (bad input or
/// configuration); the rest are failures of an otherwise valid computation.
enum class ErrorKind {
  invalid_argument,
  parse,
  io,
  degenerate,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  bool is_validation() const noexcept {
    return kind_ == ErrorKind::invalid_argument || kind_ == ErrorKind::parse ||
           kind_ == ErrorKind::io;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::invalid_argument, message);
}

}  // namespace laborflow
