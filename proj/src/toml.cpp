#include "mate/toml.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "mate/errors.hpp"

namespace mate::toml {

Value Value::of(bool v) {
  Value out;
  out.kind = Kind::kBool;
  out.b = v;
  return out;
}
Value Value::of(std::int64_t v) {
  Value out;
  out.kind = Kind::kInt;
  out.i = v;
  return out;
}
Value Value::of(double v) {
  Value out;
  out.kind = Kind::kFloat;
  out.f = v;
  return out;
}
Value Value::of(std::string v) {
  Value out;
  out.kind = Kind::kString;
  out.s = std::move(v);
  return out;
}
Value Value::array(std::vector<Value> v) {
  Value out;
  out.kind = Kind::kArray;
  out.items = std::move(v);
  return out;
}

std::string Value::kind_name() const {
  switch (kind) {
    case Kind::kBool: return "boolean";
    case Kind::kInt: return "integer";
    case Kind::kFloat: return "float";
    case Kind::kString: return "string";
    case Kind::kArray: return "array";
  }
  return "value";
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  FlatTable parse_document() {
    FlatTable table;
    std::string section;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_spaces();
        section = parse_key();
        skip_spaces();
        expect(']');
        end_of_line();
        continue;
      }
      const std::string key = parse_key();
      skip_spaces();
      expect('=');
      skip_spaces();
      Value v = parse_any();
      end_of_line();
      const std::string full = section.empty() ? key : section + "." + key;
      if (!table.emplace(full, std::move(v)).second) fail("duplicate key '" + full + "'");
    }
    return table;
  }

  Value parse_single() {
    skip_spaces();
    Value v = parse_any();
    skip_spaces();
    if (!eof()) fail("trailing characters after value");
    return v;
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config parse error at line " + std::to_string(line_) + ": " + msg);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      break;
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        if (peek() == '\n') ++line_;
        ++pos_;
        continue;
      }
      break;
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected characters at end of line");
    ++pos_;
    ++line_;
  }

  static bool bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string parse_key() {
    std::string key;
    while (true) {
      const std::size_t start = pos_;
      while (!eof() && bare_key_char(peek())) ++pos_;
      if (pos_ == start) fail("expected a key");
      key += text_.substr(start, pos_ - start);
      skip_spaces();
      if (peek() != '.') break;
      ++pos_;
      skip_spaces();
      key += '.';
    }
    return key;
  }

  Value parse_any() {
    const char c = peek();
    if (c == '"') return Value::of(parse_string());
    if (c == '[') return parse_array();
    if (text_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return Value::of(true);
    }
    if (text_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return Value::of(false);
    }
    return parse_number();
  }

  std::string parse_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = eof() ? '\0' : text_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  Value parse_array() {
    expect('[');
    std::vector<Value> items;
    skip_array_space();
    while (peek() != ']') {
      Value v = parse_any();
      if (v.kind == Value::Kind::kArray) fail("nested arrays are not supported");
      items.push_back(std::move(v));
      skip_array_space();
      if (peek() == ',') {
        ++pos_;
        skip_array_space();
        continue;
      }
      if (peek() != ']') fail("expected ',' or ']' in array");
    }
    ++pos_;
    return Value::array(std::move(items));
  }

  Value parse_number() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      ++pos_;
    std::string tok = text_.substr(start, pos_ - start);
    if (tok.empty()) fail("expected a value");
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    if (clean == "inf" || clean == "+inf" || clean == "-inf" || clean == "nan")
      fail("non-finite numbers are not allowed");
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    const char* first = clean.data() + (clean.front() == '+' ? 1 : 0);
    const char* last = clean.data() + clean.size();
    if (is_float) {
      double d = 0;
      auto [p, ec] = std::from_chars(first, last, d);
      if (ec != std::errc() || p != last) fail("invalid number '" + tok + "'");
      return Value::of(d);
    }
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(first, last, i);
    if (ec != std::errc() || p != last) fail("invalid value '" + tok + "'");
    return Value::of(i);
  }
};

}  // namespace

FlatTable parse(const std::string& text) { return Parser(text).parse_document(); }

Value parse_value(const std::string& text) { return Parser(text).parse_single(); }

std::string format_value(const Value& v) {
  switch (v.kind) {
    case Value::Kind::kBool: return v.b ? "true" : "false";
    case Value::Kind::kInt: return std::to_string(v.i);
    case Value::Kind::kFloat: {
      char buf[64];
      // Shortest representation that round-trips.
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v.f);
      std::string s(buf, p);
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      return s;
    }
    case Value::Kind::kString: {
      std::string out = "\"";
      for (char c : v.s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
          out += "\\n";
          continue;
        }
        out += c;
      }
      return out + "\"";
    }
    case Value::Kind::kArray: {
      std::string out = "[";
      for (std::size_t k = 0; k < v.items.size(); ++k) out += (k ? ", " : "") + format_value(v.items[k]);
      return out + "]";
    }
  }
  return "";
}

std::string serialize(const FlatTable& table) {
  std::map<std::string, std::vector<std::pair<std::string, const Value*>>> sections;
  std::vector<std::pair<std::string, const Value*>> top;
  for (const auto& [key, value] : table) {
    const auto dot = key.find('.');
    if (dot == std::string::npos)
      top.emplace_back(key, &value);
    else
      sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), &value);
  }
  std::string out;
  for (const auto& [k, v] : top) out += k + " = " + format_value(*v) + "\n";
  for (const auto& [name, entries] : sections) {
    if (!out.empty()) out += "\n";
    out += "[" + name + "]\n";
    for (const auto& [k, v] : entries) out += k + " = " + format_value(*v) + "\n";
  }
  return out;
}

}  // namespace mate::toml
