#include "mlcomp/kv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mlcomp/error.hpp"

namespace mlcomp::kv {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<std::string> Table::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Table::get_string(const std::string& key) const {
  auto v = find(key);
  if (!v) throw FormatError("missing key '" + key + "'");
  return *v;
}

std::int64_t Table::get_int(const std::string& key) const { return to_int(get_string(key), key); }

double Table::get_double(const std::string& key) const { return to_double(get_string(key), key); }

Table parse(std::string_view text) {
  Table t;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = trim(l.substr(0, eq));
    if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty key");
    t.set(std::string(key), std::string(trim(l.substr(eq + 1))));
  }
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::int64_t to_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(std::string(what) + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

double to_double(std::string_view s, std::string_view what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(std::string(what) + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

std::vector<double> to_double_list(std::string_view s, std::string_view what) {
  std::vector<double> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(to_double(trim(s.substr(0, comma)), what));
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace mlcomp::kv
