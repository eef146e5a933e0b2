#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace irgn {

/// Value of a flat `key = value` configuration file written in TOML syntax.
/// Supported: strings, booleans, integers, floats and single-line arrays of those.
/// Tables, inline tables, dates and multi-line values are rejected.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<bool, std::int64_t, double, std::string, Array> data;

  bool is_number() const;
  double as_double(const std::string& key) const;
  std::int64_t as_int(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  const std::string& as_string(const std::string& key) const;
  const Array& as_array(const std::string& key) const;
};

using ConfigTable = std::map<std::string, ConfigValue>;

/// Throws ConfigurationError with the line number on malformed input or duplicate keys.
ConfigTable parse_flat_toml(const std::string& text);

/// Reads and parses a file; IoError carries the path.
ConfigTable load_flat_toml(const std::string& path);

}  // namespace irgn
