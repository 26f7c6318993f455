#include "kflqr/io.h"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "kflqr/error.h"

namespace kflqr {

std::string FormatDouble(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void ArrayFile::SetScalar(const std::string& key, const std::string& value) {
  Require(key.find_first_of(" \t\n") == std::string::npos, "io",
          "scalar keys may not contain whitespace");
  auto it = scalar_index_.find(key);
  if (it != scalar_index_.end()) {
    scalars_[it->second].second = value;
    return;
  }
  scalar_index_[key] = scalars_.size();
  scalars_.emplace_back(key, value);
}

bool ArrayFile::HasScalar(const std::string& key) const {
  return scalar_index_.count(key) > 0;
}

const std::string& ArrayFile::Scalar(const std::string& key) const {
  auto it = scalar_index_.find(key);
  Require(it != scalar_index_.end(), "io", "missing field '" + key + "'");
  return scalars_[it->second].second;
}

void ArrayFile::SetArray(const std::string& name, const Matrix& value) {
  auto it = array_index_.find(name);
  if (it != array_index_.end()) {
    arrays_[it->second].second = value;
    return;
  }
  array_index_[name] = arrays_.size();
  arrays_.emplace_back(name, value);
}

bool ArrayFile::HasArray(const std::string& name) const {
  return array_index_.count(name) > 0;
}

const Matrix& ArrayFile::Array(const std::string& name) const {
  auto it = array_index_.find(name);
  Require(it != array_index_.end(), "io", "missing array '" + name + "'");
  return arrays_[it->second].second;
}

void ArrayFile::Write(const std::string& path, const std::string& magic,
                      int version) const {
  std::ofstream out(path);
  Require(out.good(), "io", "cannot open " + path + " for writing");
  out << magic << " " << version << "\n";
  for (const auto& [key, value] : scalars_) out << key << " " << value << "\n";
  for (const auto& [name, m] : arrays_) {
    out << "array " << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out << FormatDouble(m(r, c)) << (c + 1 < m.cols() ? " " : "");
      }
      out << "\n";
    }
  }
  out << "end\n";
  Require(out.good(), "io", "write to " + path + " failed");
}

ArrayFile ArrayFile::Read(const std::string& path, const std::string& magic,
                          int version) {
  std::ifstream in(path);
  Require(in.good(), "io", "cannot open " + path);
  std::string file_magic;
  int file_version = 0;
  in >> file_magic >> file_version;
  Require(file_magic == magic, "io",
          path + " is not a '" + magic + "' file");
  Require(file_version == version, "io",
          path + " has unsupported version " + std::to_string(file_version));
  ArrayFile file;
  std::string line;
  std::getline(in, line);
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end") {
      ended = true;
      break;
    }
    if (key == "array") {
      std::string name;
      Eigen::Index rows = -1, cols = -1;
      ls >> name >> rows >> cols;
      Require(rows >= 0 && cols >= 0, "io", "malformed array header: " + line);
      Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          std::string token;
          Require(static_cast<bool>(in >> token), "io",
                  "truncated array '" + name + "'");
          m(r, c) = std::stod(token);
        }
      }
      std::getline(in, line);
      file.SetArray(name, m);
      continue;
    }
    std::string value;
    std::getline(ls, value);
    if (!value.empty() && value.front() == ' ') value.erase(0, 1);
    file.SetScalar(key, value);
  }
  Require(ended, "io", path + " is truncated (no 'end' marker)");
  return file;
}

}  // namespace kflqr
