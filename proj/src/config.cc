#include "kflqr/config.h"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kflqr/error.h"

namespace kflqr {
namespace {

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  Require(in.good(), "config", "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Config Config::Load(const std::string& path) {
  Config config;
  const std::filesystem::path p(path);
  config.ParseInto(ReadFile(path), p.parent_path().string(), 0);
  return config;
}

Config Config::Parse(const std::string& text, const std::string& base_dir) {
  Config config;
  config.ParseInto(text, base_dir, 0);
  return config;
}

void Config::ParseInto(const std::string& text, const std::string& base_dir,
                       int depth) {
  Require(depth < 16, "config", "include nesting too deep");
  std::istringstream in(text);
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      Require(line.back() == ']', "config",
              "malformed section header on line " + std::to_string(number));
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    Require(eq != std::string::npos, "config",
            "expected key = value on line " + std::to_string(number));
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    Require(!key.empty(), "config", "empty key on line " + std::to_string(number));
    if (key == "include") {
      std::filesystem::path inc(value);
      if (inc.is_relative()) inc = std::filesystem::path(base_dir) / inc;
      ParseInto(ReadFile(inc.string()), inc.parent_path().string(), depth + 1);
      continue;
    }
    Set(section.empty() ? key : section + "." + key, value);
  }
}

void Config::Set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool Config::Has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::GetString(const std::string& key) const {
  const auto it = entries_.find(key);
  Require(it != entries_.end(), "config", "missing config key " + key);
  return it->second;
}

double Config::GetDouble(const std::string& key) const {
  const std::string v = GetString(key);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  Require(ec == std::errc() && ptr == v.data() + v.size(), "config",
          "config key " + key + " is not a number: " + v);
  return out;
}

long long Config::GetInt(const std::string& key) const {
  const std::string v = GetString(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  Require(ec == std::errc() && ptr == v.data() + v.size(), "config",
          "config key " + key + " is not an integer: " + v);
  return out;
}

bool Config::GetBool(const std::string& key) const {
  const std::string v = GetString(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("config", "config key " + key + " is not a boolean: " + v);
}

std::vector<double> Config::GetDoubles(const std::string& key) const {
  std::string v = GetString(key);
  for (char& c : v) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(v);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    double x = 0.0;
    const auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), x);
    Require(ec == std::errc() && ptr == token.data() + token.size(), "config",
            "config key " + key + " has a non-numeric entry: " + token);
    out.push_back(x);
  }
  return out;
}

std::string Config::GetString(const std::string& key,
                              const std::string& fallback) const {
  return Has(key) ? GetString(key) : fallback;
}
double Config::GetDouble(const std::string& key, double fallback) const {
  return Has(key) ? GetDouble(key) : fallback;
}
long long Config::GetInt(const std::string& key, long long fallback) const {
  return Has(key) ? GetInt(key) : fallback;
}
bool Config::GetBool(const std::string& key, bool fallback) const {
  return Has(key) ? GetBool(key) : fallback;
}

std::string Config::Hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : entries_) {
    for (char c : key + "=" + value + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace kflqr
