#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace obpc::toml {

struct Value;
using Array = std::vector<Value>;

/// A scalar, string or (possibly nested) array. Integers are stored as doubles.
struct Value {
    std::variant<double, bool, std::string, Array> data;
    int line = 0;

    bool is_number() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_array() const { return std::holds_alternative<Array>(data); }
};

/// Flat map from dotted key ("grid.T") to value, with the declaration order kept.
struct Document {
    std::map<std::string, Value> values;
    std::vector<std::string> order;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    const Value& at(const std::string& key) const { return values.at(key); }
};

/// Parses the subset used by the scenario files: `[table]` headers, bare or
/// dotted keys, numbers, booleans, basic strings, arrays (may span lines) and
/// `#` comments. Throws ConfigError with the line number on malformed input
/// and on duplicate keys.
Document parse(const std::string& text);

}  // namespace obpc::toml
