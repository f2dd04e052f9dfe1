// punctc/common.hpp — error type and small formatting helpers.
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace punctc {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string msg(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(msg(args...));
}

template <typename... Args>
void ensure(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

}  // namespace punctc
