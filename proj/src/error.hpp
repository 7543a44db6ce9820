#pragma once

#include <stdexcept>
#include <string>

namespace gridpure {

enum class ErrorKind {
  invalid_argument,      // bad parameters, shape mismatches
  io,                    // filesystem failures
  format,                // malformed PNG / tensor frame / config payloads
  backend,               // external denoiser process failures
  gradient_unavailable,  // differentiation requested from a black-box backend
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace gridpure
