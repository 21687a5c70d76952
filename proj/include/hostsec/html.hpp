#pragma once

// Tolerant start-tag scanner. Enough HTML to read attributes of <a>, <script>,
// <link>, <img>, <form> and <meta>; no DOM is built.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hostsec/common.hpp"

namespace hostsec::html {

struct Tag {
  std::string name;  // lower-case
  std::vector<std::pair<std::string, std::string>> attributes;  // names lower-case

  const std::string* attr(std::string_view key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return &v;
    return nullptr;
  }
};

struct ScanResult {
  std::vector<Tag> tags;
  bool malformed = false;  // unterminated tag, quote or comment
};

namespace detail {

inline void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace detail

/// Decodes the handful of character references that matter inside URLs.
inline std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    auto ent = s.substr(i + 1, semi - i - 1);
    if (ent == "amp") out.push_back('&');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (!ent.empty() && ent.front() == '#') {
      unsigned long cp = 0;
      bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
      auto digits = ent.substr(hex ? 2 : 1);
      bool ok = !digits.empty();
      for (char c : digits) {
        int d = -1;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        if (d < 0) { ok = false; break; }
        cp = cp * (hex ? 16 : 10) + static_cast<unsigned long>(d);
        if (cp > 0x10FFFF) { ok = false; break; }
      }
      if (!ok) {
        out.push_back('&');
        continue;
      }
      detail::append_utf8(out, cp);
    } else {
      out.push_back('&');
      continue;
    }
    i = semi;
  }
  return out;
}

/// Scans `body` for start tags. Raw-text elements (script, style, textarea)
/// are skipped to their end tag so markup inside scripts is not mistaken for tags.
inline ScanResult scan(std::string_view body) {
  ScanResult res;
  std::size_t i = 0;
  const std::size_t n = body.size();
  auto is_name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':';
  };
  while (i < n) {
    auto lt = body.find('<', i);
    if (lt == std::string_view::npos) break;
    i = lt + 1;
    if (body.substr(lt, 4) == "<!--") {
      auto end = body.find("-->", lt + 4);
      if (end == std::string_view::npos) {
        res.malformed = true;
        break;
      }
      i = end + 3;
      continue;
    }
    if (i < n && (body[i] == '!' || body[i] == '?' || body[i] == '/')) {
      auto gt = body.find('>', i);
      if (gt == std::string_view::npos) {
        res.malformed = true;
        break;
      }
      i = gt + 1;
      continue;
    }
    if (i >= n || !std::isalpha(static_cast<unsigned char>(body[i]))) continue;
    Tag tag;
    while (i < n && is_name_char(body[i])) tag.name.push_back(text::lower(body[i++]));
    bool closed = false;
    while (i < n) {
      while (i < n && (text::is_space(body[i]) || body[i] == '/')) ++i;
      if (i >= n) break;
      if (body[i] == '>') {
        closed = true;
        ++i;
        break;
      }
      std::string key;
      while (i < n && !text::is_space(body[i]) && body[i] != '=' && body[i] != '>' &&
             body[i] != '/')
        key.push_back(text::lower(body[i++]));
      while (i < n && text::is_space(body[i])) ++i;
      std::string value;
      if (i < n && body[i] == '=') {
        ++i;
        while (i < n && text::is_space(body[i])) ++i;
        if (i < n && (body[i] == '"' || body[i] == '\'')) {
          char q = body[i++];
          auto end = body.find(q, i);
          if (end == std::string_view::npos) {
            res.malformed = true;
            return res;
          }
          value = std::string(body.substr(i, end - i));
          i = end + 1;
        } else {
          while (i < n && !text::is_space(body[i]) && body[i] != '>') value.push_back(body[i++]);
        }
      }
      if (!key.empty()) tag.attributes.emplace_back(std::move(key), decode_entities(value));
    }
    if (!closed) {
      res.malformed = true;
      return res;
    }
    std::string name = tag.name;
    res.tags.push_back(std::move(tag));
    if (name == "script" || name == "style" || name == "textarea") {
      auto end = text::ifind(body, "</" + name, i);
      if (end == std::string_view::npos) {
        res.malformed = true;
        return res;
      }
      i = end;
    }
  }
  return res;
}

}  // namespace hostsec::html
