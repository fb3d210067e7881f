#pragma once

#include <charconv>
#include <cstdio>
#include <system_error>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nashkit::csv {

/// Shortest-safe lossless text for a double: 17 significant digits.
inline std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Exact inverse of real(), including subnormals.
inline double parse_real(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::invalid_argument || first == last) throw std::invalid_argument("csv: not a number: '" + s + "'");
  if (ec == std::errc::result_out_of_range) throw std::invalid_argument("csv: number out of range: '" + s + "'");
  if (ptr != last) throw std::invalid_argument("csv: trailing characters in number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace nashkit::csv
