#pragma once

#include <stdexcept>
#include <string>

namespace chsmm {

/// Machine-readable failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
  input,          // caller violated a precondition
  parse,          // malformed file content
  empty_input,    // nothing to work with
  alignment,      // exogenous data does not cover the series
  infeasible_k,   // more clusters than distinct values
  insufficient_data,
  undefined_normalizer,
  load,           // unreadable or corrupt model file
  version,        // model file written by an incompatible format version
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input: return "input-error";
    case ErrorKind::parse: return "parse-error";
    case ErrorKind::empty_input: return "empty-input";
    case ErrorKind::alignment: return "alignment-error";
    case ErrorKind::infeasible_k: return "infeasible-k";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::undefined_normalizer: return "undefined-normalizer";
    case ErrorKind::load: return "load-error";
    case ErrorKind::version: return "version-error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::input, what);
}

}  // namespace chsmm
