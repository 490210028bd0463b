#include "ikp/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ikp::ad {

namespace {
constexpr const char* kHeader = "ikp-ckpt v1";
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& kv : meta) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& kv : meta)
    if (kv.first == key) return &kv.second;
  return nullptr;
}

std::string Checkpoint::require_meta(const std::string& key) const {
  const std::string* v = find_meta(key);
  if (!v) throw ConfigError("checkpoint: missing meta key '" + key + "'");
  return *v;
}

std::string encode_double(double v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(std::bit_cast<uint64_t>(v)));
  return std::string(buf);
}

double decode_double(const std::string& hex) {
  if (hex.size() != 16) throw ConfigError("checkpoint: bad double encoding '" + hex + "'");
  uint64_t bits = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw ConfigError("checkpoint: bad hex digit in '" + hex + "'");
    bits = (bits << 4) | static_cast<uint64_t>(d);
  }
  return std::bit_cast<double>(bits);
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::ofstream out(path);
  if (!out) throw ConfigError("checkpoint: cannot open '" + path + "' for writing");
  out << kHeader << "\n";
  for (const auto& kv : cp.meta) out << "meta " << kv.first << " " << kv.second << "\n";
  for (int id = 0; id < cp.params.count(); ++id) {
    const ParamArray& a = cp.params.array(id);
    out << "array " << a.name << " " << a.rows << " " << a.cols << "\n";
    for (size_t i = 0; i < a.data.size(); ++i) {
      out << encode_double(a.data[i]);
      out << (((i + 1) % 8 == 0 || i + 1 == a.data.size()) ? '\n' : ' ');
    }
  }
  out << "end\n";
  if (!out) throw ConfigError("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kHeader)
    throw ConfigError("checkpoint: bad header in '" + path + "'");
  Checkpoint cp;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") return cp;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      cp.meta.emplace_back(key, value);
    } else if (tag == "array") {
      std::string name;
      int rows = 0, cols = 0;
      ls >> name >> rows >> cols;
      if (name.empty() || rows < 1 || cols < 1)
        throw ConfigError("checkpoint: bad array line '" + line + "'");
      const int id = cp.params.add(name, rows, cols);
      auto& data = cp.params.array(id).data;
      for (size_t i = 0; i < data.size(); ++i) {
        std::string hex;
        if (!(in >> hex)) throw ConfigError("checkpoint: truncated array '" + name + "'");
        data[i] = decode_double(hex);
      }
      std::getline(in, line);  // consume end of the last data line
    } else {
      throw ConfigError("checkpoint: unknown line '" + line + "'");
    }
  }
  throw ConfigError("checkpoint: missing end marker in '" + path + "'");
}

}  // namespace ikp::ad
