#pragma once

// Flat `key = value` text files, used for platform and run configuration.
// `#` starts a comment; blank lines are ignored; later keys override earlier.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mlcomp::kv {

class Table {
 public:
  void set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }
  bool contains(const std::string& key) const { return entries_.contains(key); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Throw FormatError when missing or malformed.
  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;

  std::optional<std::string> find(const std::string& key) const;

 private:
  std::map<std::string, std::string> entries_;
};

Table parse(std::string_view text);
std::string read_file(const std::filesystem::path& path);

std::int64_t to_int(std::string_view s, std::string_view what);
double to_double(std::string_view s, std::string_view what);
std::vector<double> to_double_list(std::string_view s, std::string_view what);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace mlcomp::kv
