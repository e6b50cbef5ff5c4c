#pragma once

#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <sstream>
#include <string>

namespace branchlim::csv {

/// Round-trip decimal form with '.' separator; NaN becomes an empty field.
inline std::string num(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// RFC-4180 writer: CRLF record terminator.
class Writer {
 public:
  Writer& field(const std::string& s) {
    sep();
    os_ << quote(s);
    return *this;
  }
  Writer& field(double x) {
    sep();
    os_ << num(x);
    return *this;
  }
  Writer& field(std::size_t n) {
    sep();
    os_ << n;
    return *this;
  }
  Writer& field(bool b) {
    sep();
    os_ << (b ? "true" : "false");
    return *this;
  }
  Writer& row(std::initializer_list<std::string> cols) {
    for (const auto& c : cols) field(c);
    return end();
  }
  Writer& end() {
    os_ << "\r\n";
    first_ = true;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  void sep() {
    if (!first_) os_ << ',';
    first_ = false;
  }
  std::ostringstream os_;
  bool first_ = true;
};

}  // namespace branchlim::csv
