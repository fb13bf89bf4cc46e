#pragma once

#include <stdexcept>
#include <string>

namespace homosynth {

// Base error for all contract violations and I/O failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a computation produced a non-finite value (NaN/Inf).
// The CLI maps this to exit code 2, everything else to exit code 1.
class NumericalError : public Error {
 public:
  using Error::Error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace homosynth
