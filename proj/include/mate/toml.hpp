#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mate::toml {

// Scalars and single-level arrays of scalars; enough for run configs.
struct Value {
  enum class Kind { kBool, kInt, kFloat, kString, kArray };
  Kind kind = Kind::kInt;
  bool b = false;
  std::int64_t i = 0;
  double f = 0.0;
  std::string s;
  std::vector<Value> items;

  static Value of(bool v);
  static Value of(std::int64_t v);
  static Value of(double v);
  static Value of(std::string v);
  static Value array(std::vector<Value> v);

  std::string kind_name() const;
};

// Dotted key ("train.lr_max") -> value.
using FlatTable = std::map<std::string, Value>;

// Supported subset: [section] / [a.b] headers, bare or dotted keys, basic
// strings, integers, floats, booleans, and arrays of those (may span lines).
// Duplicate keys are an error. Throws ConfigError with a line number.
FlatTable parse(const std::string& text);

// Parses a single value literal, as used by "--set key=value".
Value parse_value(const std::string& text);

// Groups keys by their first component and writes one section per group.
std::string serialize(const FlatTable& table);
std::string format_value(const Value& v);

}  // namespace mate::toml
