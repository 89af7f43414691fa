#pragma once

// Line-oriented config files:
//
//   # comment
//   [section]
//   key = value
//   list = 1, 2, 3
//
// Keys before the first header belong to the unnamed section "". Every entry
// remembers its line so type errors can point at it.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "synlab/error.hpp"

namespace synlab {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
bool parse_scalar(std::string_view text, T& out) {
  text = trim(text);
  if constexpr (std::is_same_v<T, std::string>) {
    out = std::string(text);
    return true;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "on" || text == "yes" || text == "1") return out = true, true;
    if (text == "false" || text == "off" || text == "no" || text == "0") return out = false, true;
    return false;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
  } else {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
  }
}

template <class T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, std::string>) return "string";
  else if constexpr (std::is_same_v<T, bool>) return "boolean";
  else if constexpr (std::is_floating_point_v<T>) return "number";
  else if constexpr (std::is_signed_v<T>) return "integer";
  else return "non-negative integer";
}

}  // namespace detail

class ConfigFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static ConfigFile parse(std::string_view text) {
    ConfigFile cfg;
    std::string current;
    cfg.order_.push_back(current);
    cfg.sections_[current];
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t nl = text.find('\n', pos);
      const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      const std::string_view line = detail::trim(raw);
      if (line.empty() || line.front() == '#' || line.front() == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
        current = std::string(detail::trim(line.substr(1, line.size() - 2)));
        if (current.empty()) throw ConfigError(line_no, "empty section name");
        if (cfg.sections_.count(current) != 0)
          throw ConfigError(line_no, "duplicate section [" + current + "]");
        cfg.order_.push_back(current);
        cfg.sections_[current].line = line_no;
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (key.empty()) throw ConfigError(line_no, "missing key before '='");
      auto& sec = cfg.sections_[current];
      if (sec.entries.count(key) != 0)
        throw ConfigError(line_no, "duplicate key '" + key + "' (first set on line " +
                                       std::to_string(sec.entries[key].line) + ")");
      sec.entries[key] = Entry{std::string(detail::trim(line.substr(eq + 1))), line_no};
    }
    // The unnamed section only counts if something was put in it.
    if (cfg.sections_[""].entries.empty()) {
      cfg.sections_.erase("");
      cfg.order_.erase(cfg.order_.begin());
    }
    return cfg;
  }

  static ConfigFile load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Section names in file order.
  const std::vector<std::string>& sections() const noexcept { return order_; }

  /// Section names starting with `prefix`, in file order.
  std::vector<std::string> sections_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& s : order_)
      if (s.starts_with(prefix)) out.push_back(s);
    return out;
  }

  bool has_section(const std::string& section) const { return sections_.count(section) != 0; }

  bool has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.entries.count(key) != 0;
  }

  std::size_t section_line(const std::string& section) const {
    const auto it = sections_.find(section);
    return it == sections_.end() ? 0 : it->second.line;
  }

  const Entry& entry(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) throw ConfigError(0, "missing section [" + section + "]");
    const auto e = it->second.entries.find(key);
    if (e == it->second.entries.end())
      throw ConfigError(it->second.line, "missing key '" + key + "' in [" + section + "]");
    return e->second;
  }

  template <class T>
  T get(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    T out{};
    if (!detail::parse_scalar(e.value, out))
      throw ConfigError(e.line, "'" + key + "' expects a " + detail::type_name<T>() + ", got '" + e.value + "'");
    return out;
  }

  template <class T>
  T get(const std::string& section, const std::string& key, const T& fallback) const {
    return has(section, key) ? get<T>(section, key) : fallback;
  }

  template <class T>
  std::vector<T> get_list(const std::string& section, const std::string& key) const {
    const Entry& e = entry(section, key);
    std::vector<T> out;
    for (std::string_view item : detail::split_list(e.value)) {
      T v{};
      if (!detail::parse_scalar(item, v))
        throw ConfigError(e.line, "'" + key + "' expects a comma-separated list of " + detail::type_name<T>() +
                                      " values, got '" + e.value + "'");
      out.push_back(std::move(v));
    }
    return out;
  }

  template <class T>
  std::vector<T> get_list(const std::string& section, const std::string& key, const std::vector<T>& fallback) const {
    return has(section, key) ? get_list<T>(section, key) : fallback;
  }

  /// Throws on the first key of `section` not in `allowed`.
  void reject_unknown_keys(const std::string& section, const std::set<std::string, std::less<>>& allowed) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return;
    const Entry* first = nullptr;
    std::string name;
    for (const auto& [k, e] : it->second.entries)
      if (allowed.count(k) == 0 && (first == nullptr || e.line < first->line)) {
        first = &e;
        name = k;
      }
    if (first != nullptr) throw ConfigError(first->line, "unknown key '" + name + "' in [" + section + "]");
  }

 private:
  struct Section {
    std::size_t line = 0;
    std::map<std::string, Entry> entries;
  };
  std::map<std::string, Section> sections_;
  std::vector<std::string> order_;
};

}  // namespace synlab
