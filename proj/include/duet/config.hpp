#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "duet/errors.hpp"

namespace duet {

/// Plain "key = value" text, one pair per line, '#' starts a comment.
/// Insertion order is preserved so serialized files are deterministic.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
  }
  void set(const std::string& key, double value) {
    std::ostringstream out;
    out.precision(15);
    out << value;
    set(key, out.str());
  }
  void set(const std::string& key, bool value) {
    set(key, std::string(value ? "true" : "false"));
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string get_string(const std::string& key,
                         const std::string& fallback = "") const {
    const std::string* v = find(key);
    return v ? *v : fallback;
  }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
      return std::stoll(*v);
    } catch (const std::exception&) {
      throw Error("config key '" + key + "' is not an integer: " + *v);
    }
  }
  double get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
      return std::stod(*v);
    } catch (const std::exception&) {
      throw Error("config key '" + key + "' is not a number: " + *v);
    }
  }
  bool get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw Error("config key '" + key + "' is not a boolean: " + *v);
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write config file '" + path + "'");
    out << to_text();
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  static std::string trim(std::string s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && is_space(static_cast<unsigned char>(s.front())))
      s.erase(s.begin());
    while (!s.empty() && is_space(static_cast<unsigned char>(s.back())))
      s.pop_back();
    return s;
  }
  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return &v;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace duet
