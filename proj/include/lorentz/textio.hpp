#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "geometry.hpp"

namespace lorentz {

/// Shortest text that round-trips a double (17 significant digits).
inline std::string fmt_real(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string strip_comment(std::string_view s) {
  const auto p = s.find('#');
  return trim(p == std::string_view::npos ? s : s.substr(0, p));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  return out;
}

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

/// Evaluates arithmetic with + - * / ^, parentheses, sqrt, sin, cos, pi.
/// Rule files use it so coordinates like sqrt(3)/2 stay exact in the source.
class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : s_(text) {}

  double parse() {
    const double v = expr();
    skip();
    if (i_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  std::string_view s_;
  std::size_t i_ = 0;

  [[noreturn]] void fail(const char* what) const {
    throw ParseError(std::string("bad expression '") + std::string(s_) + "': " + what);
  }
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool eat(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = power();
    for (;;) {
      if (eat('*')) v *= power();
      else if (eat('/')) v /= power();
      else return v;
    }
  }
  double power() {
    const double b = unary();
    if (eat('^')) return std::pow(b, power());
    return b;
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return primary();
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (i_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_]))) {
      const std::size_t b = i_;
      while (i_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[i_]))) ++i_;
      const std::string name(s_.substr(b, i_ - b));
      if (name == "pi") return std::numbers::pi;
      if (!eat('(')) fail("expected '(' after function name");
      const double a = expr();
      if (!eat(')')) fail("missing ')'");
      if (name == "sqrt") return std::sqrt(a);
      if (name == "sin") return std::sin(a);
      if (name == "cos") return std::cos(a);
      fail("unknown function");
    }
    char* end = nullptr;
    const std::string tmp(s_.substr(i_));
    const double v = std::strtod(tmp.c_str(), &end);
    const std::size_t used = static_cast<std::size_t>(end - tmp.c_str());
    if (used == 0) fail("expected a number");
    i_ += used;
    return v;
  }
};

inline double parse_real(std::string_view text) { return ExprParser(text).parse(); }

/// Parses "(x, y)" with expression components.
inline Vec2 parse_point(std::string_view text) {
  std::string t = trim(text);
  if (t.size() < 2 || t.front() != '(' || t.back() != ')') throw ParseError("expected (x, y): " + t);
  // Split on the top-level comma only.
  int depth = 0;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    if (t[i] == '(') ++depth;
    else if (t[i] == ')') --depth;
    else if (t[i] == ',' && depth == 0)
      return {parse_real(t.substr(1, i - 1)), parse_real(t.substr(i + 1, t.size() - i - 2))};
  }
  throw ParseError("expected (x, y): " + t);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Flat "key = value" configuration text. Later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip_comment(line);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return kv;
}

/// RFC-4180 CSV with 17-digit reals.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void comment(std::string_view key, std::string_view value) { out_ << "# " << key << '=' << value << '\n'; }

  void header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << quote(cols[i]);
    out_ << '\n';
  }

  CsvWriter& cell(double v) { return raw(fmt_real(v)); }
  CsvWriter& cell(long long v) { return raw(std::to_string(v)); }
  CsvWriter& cell(int v) { return raw(std::to_string(v)); }
  CsvWriter& cell(std::size_t v) { return raw(std::to_string(v)); }
  CsvWriter& cell(std::string_view v) { return raw(quote(v)); }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }

 private:
  std::ostream& out_;
  bool first_ = true;

  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  static std::string quote(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + '"';
  }
};

}  // namespace lorentz
