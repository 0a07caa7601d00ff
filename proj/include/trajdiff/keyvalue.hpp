#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trajdiff {

/// Ordered `key = value` text records. Lines starting with '#' and blank
/// lines are ignored on parse.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }
  void set(const std::string& key, unsigned long long value);
  void set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set_doubles(const std::string& key, const std::vector<double>& values);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  unsigned long long get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const std::vector<std::string>& keys() const { return order_; }

  std::string to_text() const;
  static KeyValues parse(const std::string& text);
  void save(const std::filesystem::path& file) const;
  static KeyValues load(const std::filesystem::path& file);

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

/// Shortest round-trip decimal representation.
std::string format_double(double v);
std::string hex64(unsigned long long v);

}  // namespace trajdiff
