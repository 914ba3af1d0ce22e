#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace hiervid {

// Contract violations (bad shapes, bad arguments, malformed files) throw Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class... Args>
std::string str_cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

}  // namespace hiervid

#define HV_REQUIRE(cond, ...)                             \
  do {                                                    \
    if (!(cond)) ::hiervid::fail(::hiervid::str_cat(__VA_ARGS__)); \
  } while (0)
