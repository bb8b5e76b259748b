#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace graviton {

// All recoverable failures (bad shapes, missing files, contract violations)
// surface as this exception type. The CLI maps it to exit code 2.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <typename A, typename... Rest>
void msg_append(std::ostringstream& os, A&& a, Rest&&... rest) {
  os << std::forward<A>(a);
  msg_append(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Parts>
std::string msg(Parts&&... parts) {
  std::ostringstream os;
  detail::msg_append(os, std::forward<Parts>(parts)...);
  return os.str();
}

}  // namespace graviton

#define GRAVITON_REQUIRE(cond, ...)                       \
  do {                                                    \
    if (!(cond)) throw ::graviton::error(::graviton::msg(__VA_ARGS__)); \
  } while (0)
