#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace simspoof {

// Flat `key = value` text. '#' starts a comment and blank lines are ignored.
// A repeated key keeps its last value, so overrides can be appended.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& origin = "config");
  static KeyValues parse_text(const std::string& text, const std::string& origin = "config");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback);
  double get(const std::string& key, double fallback);
  std::size_t get(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get(const std::string& key, bool fallback);
  std::vector<std::size_t> get(const std::string& key, const std::vector<std::size_t>& fallback);

  // Throws listing every key that was never read, which catches typos.
  void reject_unused() const;
  std::string text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

}  // namespace simspoof
