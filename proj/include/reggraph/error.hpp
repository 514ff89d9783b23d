#pragma once

#include <stdexcept>
#include <string>

namespace reggraph {

/// Raised for precondition violations and numerically undefined requests.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(what);
}

}  // namespace reggraph
