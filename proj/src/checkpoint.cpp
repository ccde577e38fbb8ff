#include "botinject/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace botinject {

void Checkpoint::set_meta(const std::string& key, std::string value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  meta.emplace_back(key, std::move(value));
}

std::optional<std::string> Checkpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw std::runtime_error("checkpoint is missing metadata '" + key + "'");
}

void Checkpoint::add(const Parameter& p) { params.push_back(p); }

void Checkpoint::add(const std::string& name, const Matrix& value) {
  params.emplace_back(name, value);
}

const Parameter* Checkpoint::find(const std::string& name) const {
  for (const Parameter& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Matrix& Checkpoint::require(const std::string& name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw std::runtime_error("checkpoint is missing parameter '" + name + "'");
  return p->value;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os << "ckpt v1\n";
  for (const auto& [k, v] : ckpt.meta) os << k << ' ' << v << '\n';
  for (const Parameter& p : ckpt.params) {
    os << p.name << ' ' << p.value.rows() << 'x' << p.value.cols();
    for (Index i = 0; i < p.value.rows(); ++i) {
      for (Index j = 0; j < p.value.cols(); ++j) os << ' ' << format_double(p.value(i, j));
    }
    os << '\n';
  }
}

namespace {

bool parse_shape(const std::string& tok, Index& rows, Index& cols) {
  const auto x = tok.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == tok.size()) return false;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (i != x && (tok[i] < '0' || tok[i] > '9')) return false;
  }
  rows = std::stol(tok.substr(0, x));
  cols = std::stol(tok.substr(x + 1));
  return true;
}

}  // namespace

Checkpoint read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "ckpt v1") {
    throw std::runtime_error("checkpoint: missing 'ckpt v1' header");
  }
  Checkpoint ckpt;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, second;
    if (!(ls >> name >> second)) {
      throw std::runtime_error("checkpoint line " + std::to_string(lineno) + ": malformed");
    }
    Index rows = 0, cols = 0;
    if (!parse_shape(second, rows, cols)) {
      std::string rest;
      std::getline(ls, rest);
      ckpt.meta.emplace_back(name, second + rest);
      continue;
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        std::string tok;
        if (!(ls >> tok)) {
          throw std::runtime_error("checkpoint line " + std::to_string(lineno) +
                                   ": too few values for " + name);
        }
        char* end = nullptr;
        m(i, j) = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
          throw std::runtime_error("checkpoint line " + std::to_string(lineno) +
                                   ": bad number '" + tok + "'");
        }
      }
    }
    std::string extra;
    if (ls >> extra) {
      throw std::runtime_error("checkpoint line " + std::to_string(lineno) +
                               ": too many values for " + name);
    }
    ckpt.params.emplace_back(name, std::move(m));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(os, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return read_checkpoint(is);
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
  std::ostringstream os;
  write_checkpoint(os, ckpt);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : os.str()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

}  // namespace botinject
