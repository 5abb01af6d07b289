#pragma once

#include <stdexcept>
#include <string>

namespace biqe {

enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  not_found,
  numeric,
  internal,
};

// All library failures surface as biqe::Error; the C layer maps the code onto
// a status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace biqe
