#ifndef GPM_CONFIG_HPP_
#define GPM_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gpm {

// Flat UTF-8 key=value config file, one pair per line, '#' starts a comment.
// Keys are unique; duplicate keys are a config error.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  int get_int(const std::string& key) const;
  int get_int_or(const std::string& key, int fallback) const;
  std::int64_t get_i64_or(const std::string& key, std::int64_t fallback) const;
  float get_float(const std::string& key) const;
  float get_float_or(const std::string& key, float fallback) const;

  // Whitespace-separated floats inside one value.
  std::vector<float> get_floats(const std::string& key) const;
  // Whitespace-separated tokens inside one value.
  std::vector<std::string> get_tokens(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t value);
  void set_float(const std::string& key, float value);

  // Keys sharing a prefix, in lexicographic order (used for indexed entries
  // like static_rect.1, static_rect.2, ...).
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  // Canonical serialization: sorted "key=value" lines. Basis for config
  // hashing, so formatting must stay stable.
  std::string canonical() const;
  void write_file(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// FNV-1a 64-bit over a byte string, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace gpm

#endif  // GPM_CONFIG_HPP_
