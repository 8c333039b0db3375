#pragma once

#include <stdexcept>
#include <string>

namespace vslr {

// Error classes surfaced on the command line as "error: <kind>: <message>".
namespace errc {
inline constexpr const char* kShape = "shape";
inline constexpr const char* kConfig = "config";
inline constexpr const char* kManifest = "manifest";
inline constexpr const char* kIo = "io";
inline constexpr const char* kHeadClassMismatch = "head/class mismatch";
inline constexpr const char* kDivergence = "divergence";
inline constexpr const char* kPrecondition = "precondition";
}  // namespace errc

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(const char* kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace vslr
