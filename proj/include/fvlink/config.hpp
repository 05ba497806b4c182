#pragma once

// `key = value` configuration files. Blank lines and lines starting with '#'
// are ignored. Consumers take() the keys they understand; finish() rejects
// anything left over, so a typo in a key is an error rather than a no-op.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "fvlink/errors.hpp"
#include "fvlink/textio.hpp"

namespace fvlink {

class KeyValues {
 public:
  static KeyValues parse(std::string_view content, const std::string& file = "") {
    KeyValues kv;
    kv.file_ = file;
    std::size_t lineno = 0;
    for (auto raw : text::split(content, '\n')) {
      ++lineno;
      const std::string_view line = text::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError(file, lineno, "expected 'key = value'");
      const std::string key(text::trim(line.substr(0, eq)));
      const std::string value(text::trim(line.substr(eq + 1)));
      if (key.empty()) throw ParseError(file, lineno, "empty key");
      if (kv.entries_.count(key)) throw ParseError(file, lineno, "duplicate key '" + key + "'");
      kv.entries_[key] = Entry{value, lineno};
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::string content;
    for (const auto& l : text::read_lines(path)) content += l + "\n";
    return parse(content, path);
  }

  // Later sets win over file entries (command-line overrides).
  void set(const std::string& key, const std::string& value) { entries_[key] = Entry{value, 0}; }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::optional<std::string> take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    std::string v = it->second.value;
    last_line_ = it->second.line;
    entries_.erase(it);
    return v;
  }

  template <typename T>
  void take_into(const std::string& key, T& out) {
    auto v = take(key);
    if (!v) return;
    if constexpr (std::is_same_v<T, std::string>) {
      out = *v;
    } else if constexpr (std::is_floating_point_v<T>) {
      auto d = text::parse_double(*v);
      if (!d) fail(key, "expected a number, got '" + *v + "'");
      out = static_cast<T>(*d);
    } else if constexpr (std::is_integral_v<T>) {
      auto i = text::parse_int(*v);
      if (!i) fail(key, "expected an integer, got '" + *v + "'");
      if constexpr (std::is_unsigned_v<T>) {
        if (*i < 0) fail(key, "must be non-negative");
      }
      out = static_cast<T>(*i);
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ParseError(file_, last_line_, key + ": " + msg);
  }

  void finish() const {
    if (entries_.empty()) return;
    const auto& [key, e] = *entries_.begin();
    throw ParseError(file_, e.line, "unknown key '" + key + "'");
  }

  const std::string& file() const { return file_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> entries_;
  std::string file_;
  std::size_t last_line_ = 0;
};

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto part : text::split(s, ',')) {
    const auto t = text::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace fvlink
