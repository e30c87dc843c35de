// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace refl {

// Categories mirror the C API status codes (see refl.h).
enum class ErrorCode {
  kInvalidArgument = 1,
  kConfig = 2,
  kDependency = 3,
  kIo = 4,
  kState = 5,
  kConflict = 6,
  kNotFound = 7,
  kInternal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace refl
