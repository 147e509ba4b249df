// nest/toml.hpp

// Copyright 2026  nest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nest/errors.hpp"

namespace nest::toml {

// Minimal TOML subset: single-level [tables], `key = value` with booleans,
// integers, floats, quoted strings and flat arrays, `#` comments. That is
// the whole config surface this project needs.

struct ParseError : Error {
  using Error::Error;
};

struct Value {
  enum class Kind { kBool, kInt, kFloat, kString, kArray };

  Kind kind = Kind::kInt;
  bool b = false;
  int64_t i = 0;
  double f = 0.0;
  std::string s;
  std::vector<Value> array;

  bool AsBool() const {
    if (kind != Kind::kBool) throw ParseError("expected a boolean");
    return b;
  }
  int64_t AsInt() const {
    if (kind != Kind::kInt) throw ParseError("expected an integer");
    return i;
  }
  double AsFloat() const {
    if (kind == Kind::kFloat) return f;
    if (kind == Kind::kInt) return static_cast<double>(i);
    throw ParseError("expected a number");
  }
  const std::string &AsString() const {
    if (kind != Kind::kString) throw ParseError("expected a string");
    return s;
  }
};

using Table = std::map<std::string, Value>;

struct Document {
  std::map<std::string, Table> tables;  // "" holds root-level keys

  const Value *Find(const std::string &table, const std::string &key) const {
    auto t = tables.find(table);
    if (t == tables.end()) return nullptr;
    auto v = t->second.find(key);
    return v == t->second.end() ? nullptr : &v->second;
  }
};

namespace detail {

inline std::string Trim(const std::string &s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Removes a trailing comment, honoring quoted strings.
inline std::string StripComment(const std::string &line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline Value ParseScalar(const std::string &raw, size_t line_no);

inline Value ParseValue(const std::string &raw, size_t line_no) {
  const std::string text = Trim(raw);
  if (text.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": missing value");
  }
  if (text.front() == '[') {
    if (text.back() != ']') {
      throw ParseError("line " + std::to_string(line_no) +
                       ": array must close on the same line");
    }
    Value v;
    v.kind = Value::Kind::kArray;
    const std::string inner = Trim(text.substr(1, text.size() - 2));
    if (inner.empty()) return v;
    size_t start = 0;
    bool in_string = false;
    for (size_t i = 0; i <= inner.size(); ++i) {
      if (i < inner.size() && inner[i] == '"' &&
          (i == 0 || inner[i - 1] != '\\')) {
        in_string = !in_string;
      }
      if (i == inner.size() || (inner[i] == ',' && !in_string)) {
        v.array.push_back(ParseScalar(Trim(inner.substr(start, i - start)),
                                      line_no));
        start = i + 1;
      }
    }
    return v;
  }
  return ParseScalar(text, line_no);
}

inline Value ParseScalar(const std::string &text, size_t line_no) {
  Value v;
  if (text.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": empty value");
  }
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') {
      throw ParseError("line " + std::to_string(line_no) +
                       ": unterminated string");
    }
    v.kind = Value::Kind::kString;
    const std::string body = text.substr(1, text.size() - 2);
    for (size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '\\' && i + 1 < body.size()) {
        const char e = body[++i];
        switch (e) {
          case 'n': v.s += '\n'; break;
          case 't': v.s += '\t'; break;
          case '"': v.s += '"'; break;
          case '\\': v.s += '\\'; break;
          default:
            throw ParseError("line " + std::to_string(line_no) +
                             ": unsupported escape");
        }
      } else {
        v.s += body[i];
      }
    }
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = Value::Kind::kBool;
    v.b = text == "true";
    return v;
  }
  const bool is_float = text.find_first_of(".eE") != std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      v.kind = Value::Kind::kFloat;
      v.f = std::stod(text, &used);
    } else {
      v.kind = Value::Kind::kInt;
      v.i = std::stoll(text, &used, 10);
    }
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception &) {
    throw ParseError("line " + std::to_string(line_no) + ": bad value '" +
                     text + "'");
  }
  return v;
}

}  // namespace detail

inline Document Parse(const std::string &text) {
  Document doc;
  std::string table;
  std::istringstream in(text);
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::Trim(detail::StripComment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": malformed table header");
      }
      table = detail::Trim(line.substr(1, line.size() - 2));
      doc.tables[table];  // a header alone creates the table
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    const std::string key = detail::Trim(line.substr(0, eq));
    if (key.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty key");
    }
    doc.tables[table][key] = detail::ParseValue(line.substr(eq + 1), line_no);
  }
  return doc;
}

inline Document ParseFile(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw NotFoundError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return Parse(ss.str());
}

}  // namespace nest::toml
