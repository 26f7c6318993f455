#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kflqr/linalg.h"

namespace kflqr {

/// Versioned text container of ordered scalar fields and named numeric
/// arrays:
///
///   <magic> <version>
///   <key> <value>                 (scalar fields, one per line)
///   array <name> <rows> <cols>    (followed by `rows` lines of `cols` values)
///   end
///
/// Values are written with 17 significant digits so doubles round-trip.
class ArrayFile {
 public:
  void SetScalar(const std::string& key, const std::string& value);
  bool HasScalar(const std::string& key) const;
  /// Throws "io" if missing.
  const std::string& Scalar(const std::string& key) const;

  void SetArray(const std::string& name, const Matrix& value);
  bool HasArray(const std::string& name) const;
  /// Throws "io" if missing.
  const Matrix& Array(const std::string& name) const;

  void Write(const std::string& path, const std::string& magic,
             int version) const;
  /// Throws "io" on a magic/version mismatch or a malformed body.
  static ArrayFile Read(const std::string& path, const std::string& magic,
                        int version);

 private:
  std::vector<std::pair<std::string, std::string>> scalars_;
  std::vector<std::pair<std::string, Matrix>> arrays_;
  std::map<std::string, size_t> scalar_index_;
  std::map<std::string, size_t> array_index_;
};

std::string FormatDouble(double v);

}  // namespace kflqr
