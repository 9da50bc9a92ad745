#pragma once

#include <stdexcept>
#include <string>

namespace tram {

struct TramError : std::runtime_error {
  explicit TramError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw TramError(msg);
}

}  // namespace tram
