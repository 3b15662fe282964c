#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hgcn {

using real = double;

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind : int {
  Config = 2,
  Data = 3,
  Numeric = 4,
};

struct Error : std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }

inline bool is_finite(real x) { return std::isfinite(x); }

}  // namespace hgcn
