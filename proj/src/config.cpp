#include "gpm/config.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "gpm/errors.hpp"

namespace gpm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_string(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " (in " + path + ")");
  }
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": missing '='");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    if (cfg.kv_.count(key))
      throw ConfigError("duplicate config key: " + key);
    cfg.kv_[key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const {
  return kv_.count(key) != 0;
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key,
                                   const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(r);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: " + v);
  }
}

int KeyValueConfig::get_int_or(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::int64_t KeyValueConfig::get_i64_or(const std::string& key,
                                        std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::int64_t>(r);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: " + v);
  }
}

float KeyValueConfig::get_float(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    float r = std::stof(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: " + v);
  }
}

float KeyValueConfig::get_float_or(const std::string& key,
                                   float fallback) const {
  return has(key) ? get_float(key) : fallback;
}

std::vector<float> KeyValueConfig::get_floats(const std::string& key) const {
  std::istringstream in(get(key));
  std::vector<float> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stof(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: " + tok);
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_tokens(
    const std::string& key) const {
  std::istringstream in(get(key));
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

void KeyValueConfig::set_int(const std::string& key, std::int64_t value) {
  kv_[key] = std::to_string(value);
}

void KeyValueConfig::set_float(const std::string& key, float value) {
  std::ostringstream ss;
  ss.precision(9);  // round-trips float32 exactly
  ss << value;
  kv_[key] = ss.str();
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = kv_.lower_bound(prefix); it != kv_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : kv_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void KeyValueConfig::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write config file: " + path);
  out << canonical();
  if (!out) throw DataError("short write: " + path);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace gpm
