#pragma once

// Text checkpoints:
//
//   ckpt v1
//   <key> <value>                      metadata line
//   <name> <rows>x<cols> <values...>   parameter line, row-major, %.17g
//
// Values are printed with enough digits to reload bit-exactly.

#include "botinject/tape.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace botinject {

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<Parameter> params;

  void set_meta(const std::string& key, std::string value);
  std::optional<std::string> meta_value(const std::string& key) const;
  const std::string& require_meta(const std::string& key) const;

  void add(const Parameter& p);
  void add(const std::string& name, const Matrix& value);
  const Parameter* find(const std::string& name) const;
  const Matrix& require(const std::string& name) const;
};

std::string format_double(double v);

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the serialized form; used to prove a checkpoint was reused.
std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace botinject
