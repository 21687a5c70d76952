#pragma once

// Minimal RFC 4180 CSV reading/writing plus flat key=value configuration files.

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hostsec/common.hpp"

namespace hostsec::csv {

/// One parsed CSV table. `line_numbers[i]` is the 1-based file line of row i.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Index of a header column, or throws InputError naming the file context.
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw InputError("missing CSV column '" + std::string(name) + "'");
  }

  bool has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

inline std::vector<std::string> parse_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw InputError("unterminated quoted CSV field");
  fields.push_back(std::move(cur));
  return fields;
}

/// Reads a CSV stream whose first non-empty line is the header.
inline Table read(std::istream& in, const std::string& context = "csv") {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = parse_line(line);
    } catch (const InputError& e) {
      throw InputError(context + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      for (auto& f : fields) f = std::string(text::trim(f));
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw InputError(context + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw InputError(context + ": missing header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read(in, path);
}

inline std::string quote(std::string_view field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << quote(fields[i]);
  }
  out << '\n';
}

/// Renders rows as a space-aligned plain-text table for eyeballing.
inline std::string aligned(const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c)
      width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      std::string cell = c < r.size() ? r[c] : "";
      if (c == 0) {
        os << cell << std::string(width[c] - cell.size(), ' ');
      } else {
        os << "  " << std::string(width[c] - cell.size(), ' ') << cell;
      }
    }
    os << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  os << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
  for (const auto& r : rows) emit(r);
  return os.str();
}

}  // namespace hostsec::csv

namespace hostsec::kv {

/// Ordered flat `key = value` file; '#' starts a comment line.
struct Config {
  std::map<std::string, std::string> values;
  std::string source = "config";

  bool has(const std::string& key) const { return values.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw InputError(source + ": missing required key '" + key + "'");
    return it->second;
  }

  template <typename Int>
  Int get_int(const std::string& key, Int fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    auto v = text::parse_int<Int>(it->second);
    if (!v) throw InputError(source + ": key '" + key + "' is not an integer: " + it->second);
    return *v;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    auto v = text::parse_double(it->second);
    if (!v) throw InputError(source + ": key '" + key + "' is not a number: " + it->second);
    return *v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    auto v = text::parse_bool(it->second);
    if (!v) throw InputError(source + ": key '" + key + "' is not a boolean: " + it->second);
    return *v;
  }

  /// Throws if any key is outside `known`; catches typos in run descriptions.
  void check_keys(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : values)
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw InputError(source + ": unknown key '" + k + "'");
  }
};

inline Config parse(std::istream& in, const std::string& source = "config") {
  Config cfg;
  cfg.source = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw InputError(source + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key(text::trim(t.substr(0, eq)));
    std::string value(text::trim(t.substr(eq + 1)));
    if (key.empty()) throw InputError(source + ":" + std::to_string(lineno) + ": empty key");
    cfg.values[key] = value;
  }
  return cfg;
}

inline Config parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse(in, path);
}

}  // namespace hostsec::kv
