#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ikp/tape.hpp"

namespace ikp::ad {

// Self-describing text container: versioned header, ordered key/value
// metadata, then named arrays with shapes. Doubles are stored as 16-digit hex
// bit patterns, so save/load round-trips bit-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  ParamStore params;

  void set_meta(const std::string& key, const std::string& value);
  const std::string* find_meta(const std::string& key) const;
  std::string require_meta(const std::string& key) const;  // throws ConfigError
};

std::string encode_double(double v);
double decode_double(const std::string& hex);

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ikp::ad
