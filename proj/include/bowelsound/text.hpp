#pragma once

// Small helpers shared by the plain-text artifact formats.

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bowelsound/error.hpp"

namespace bowelsound {

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

/// Fixed-precision rendering for human-readable tables.
inline std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line = 0) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw Error(ErrorKind::ParseError, (line ? "line " + std::to_string(line) + ": " : std::string()) +
                                           "invalid number '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s, std::size_t line = 0) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw Error(ErrorKind::ParseError, (line ? "line " + std::to_string(line) + ": " : std::string()) +
                                           "invalid integer '" + std::string(s) + "'");
  return v;
}

/// Calls fn(line, lineno) for every line that is neither blank nor a '#' comment.
template <typename Fn>
void for_each_record_line(std::string_view text, Fn&& fn) {
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto t = trim(line);
    if (!t.empty() && t.front() != '#') fn(line, lineno);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

/// `key = value` lines; '#' comments. Later keys overwrite earlier ones.
inline std::map<std::string, std::string, std::less<>> parse_key_values(std::string_view text) {
  std::map<std::string, std::string, std::less<>> out;
  for_each_record_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected key = value");
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  });
  return out;
}

}  // namespace bowelsound
