#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kflqr {

/// Flat key=value configuration.
///
///   # comment
///   include = base.cfg          (path relative to the including file)
///   [train]                     (prefixes following keys with "train.")
///   epochs = 2000               -> "train.epochs"
///   lqr.q = 10, 10              (dotted keys work anywhere)
///
/// Later assignments override earlier ones, including those from includes.
class Config {
 public:
  static Config Load(const std::string& path);
  static Config Parse(const std::string& text, const std::string& base_dir = ".");

  void Set(const std::string& key, const std::string& value);
  bool Has(const std::string& key) const;

  /// Each getter throws "config" when the key is missing or malformed.
  std::string GetString(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  long long GetInt(const std::string& key) const;
  bool GetBool(const std::string& key) const;
  /// Comma- or whitespace-separated numbers.
  std::vector<double> GetDoubles(const std::string& key) const;

  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  long long GetInt(const std::string& key, long long fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// 16 hex digits of FNV-1a over the sorted "key=value" lines.
  std::string Hash() const;

 private:
  void ParseInto(const std::string& text, const std::string& base_dir,
                 int depth);

  std::map<std::string, std::string> entries_;
};

/// Independent stream seeds from one master seed.
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream);

}  // namespace kflqr
