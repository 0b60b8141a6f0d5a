#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace protokit {

// Base class for every error that crosses a module boundary. `code()` is a
// stable kebab-case tag that the HTTP layer and the CLI report verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message) : Error("precondition", message) {}
  PreconditionError(std::string code, const std::string& message)
      : Error(std::move(code), message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io-error", message) {}
};

}  // namespace protokit
