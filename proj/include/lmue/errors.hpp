#pragma once

#include <stdexcept>
#include <string>

namespace lmue {

// Every failure raised by the library derives from Error. The kind decides
// how the CLI maps it to an exit code and how the service maps it to an
// HTTP status.
enum class ErrorKind {
  Io,
  Parse,
  Validation,
  UnavailableInput,   // estimator input missing from the record
  InsufficientData,   // too few samples / points
  DegenerateSimilarity,
  Numeric,
  Shape,
  Input,              // caller-side argument errors
  Alignment,
  Transport,
  Auth,
  Capability,         // endpoint cannot provide what was asked
  Indeterminate,
  Usage,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Transport errors optionally carry the HTTP status and a server-provided
// retry hint (seconds, negative when absent).
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0, double retry_after = -1.0)
      : Error(ErrorKind::Transport, what), status_(status), retry_after_(retry_after) {}

  int status() const noexcept { return status_; }
  double retry_after() const noexcept { return retry_after_; }

 private:
  int status_;
  double retry_after_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace lmue
