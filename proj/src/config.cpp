#include "irgn/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "irgn/errors.hpp"

namespace irgn {

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, int line) : text_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "config line " << line_ << ": " << what;
    throw ConfigurationError(msg.str());
  }

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_space();
    return pos_ >= text_.size() || text_[pos_] == '#';
  }

  std::string key() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
            text_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a bare key");
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  ConfigValue value() {
    skip_space();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return {string_value()};
    if (c == '[') return {array_value()};
    return scalar();
  }

 private:
  std::string string_value() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  ConfigValue::Array array_value() {
    ++pos_;
    ConfigValue::Array out;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value());
      skip_space();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  ConfigValue scalar() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           text_[pos_] != '#' && text_[pos_] != ' ' && text_[pos_] != '\t')
      ++pos_;
    std::string token(text_.substr(start, pos_ - start));
    if (token == "true") return {true};
    if (token == "false") return {false};
    std::string digits;
    for (char c : token)
      if (c != '_') digits.push_back(c);
    if (digits == "inf" || digits == "+inf") return {std::numeric_limits<double>::infinity()};
    if (digits == "-inf") return {-std::numeric_limits<double>::infinity()};
    if (!digits.empty() && digits[0] == '+') digits.erase(0, 1);
    const char* first = digits.data();
    const char* last = digits.data() + digits.size();
    if (digits.find_first_of(".eE") == std::string::npos) {
      std::int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && ptr == last && !digits.empty()) return {v};
    } else {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec == std::errc() && ptr == last) return {v};
    }
    fail("cannot parse value '" + token + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
};

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw ConfigurationError("config key '" + key + "': expected " + expected);
}

}  // namespace

bool ConfigValue::is_number() const {
  return std::holds_alternative<double>(data) || std::holds_alternative<std::int64_t>(data);
}

double ConfigValue::as_double(const std::string& key) const {
  if (const auto* d = std::get_if<double>(&data)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&data)) return static_cast<double>(*i);
  type_error(key, "a number");
}

std::int64_t ConfigValue::as_int(const std::string& key) const {
  if (const auto* i = std::get_if<std::int64_t>(&data)) return *i;
  type_error(key, "an integer");
}

bool ConfigValue::as_bool(const std::string& key) const {
  if (const auto* b = std::get_if<bool>(&data)) return *b;
  type_error(key, "a boolean");
}

const std::string& ConfigValue::as_string(const std::string& key) const {
  if (const auto* s = std::get_if<std::string>(&data)) return *s;
  type_error(key, "a string");
}

const ConfigValue::Array& ConfigValue::as_array(const std::string& key) const {
  if (const auto* a = std::get_if<Array>(&data)) return *a;
  type_error(key, "an array");
}

ConfigTable parse_flat_toml(const std::string& text) {
  ConfigTable table;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    LineParser p(line, number);
    if (p.at_end_or_comment()) continue;
    const std::string key = p.key();
    p.expect('=');
    ConfigValue value = p.value();
    if (!p.at_end_or_comment()) p.fail("trailing characters after value");
    if (!table.emplace(key, std::move(value)).second) p.fail("duplicate key '" + key + "'");
  }
  return table;
}

ConfigTable load_flat_toml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_flat_toml(buf.str());
}

}  // namespace irgn
