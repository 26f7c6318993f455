#pragma once

#include <stdexcept>
#include <string>

namespace kflqr {

/// Every failure raised by the library carries a short machine-readable kind
/// (e.g. "dimension", "singular_matrix", "care_unsolvable") next to the
/// human-readable message. The CLI prints both on one line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

inline void Require(bool condition, const char* kind,
                    const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace kflqr
