#pragma once

#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace chsmm {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

namespace detail {

inline bool parse_uint(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && out >= 0;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Accepts epoch seconds ("1498197600", optionally with a fractional part,
/// which is truncated) or ISO-8601 "YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|+hh:mm|-hh:mm]".
/// Timestamps without an offset are taken as UTC.
inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  const std::string_view s = detail::trim(text);
  if (s.empty()) return std::nullopt;

  const bool numeric = s.find_first_not_of("0123456789.-+") == std::string_view::npos &&
                       s.find('-', 1) == std::string_view::npos;
  if (numeric) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return Timestamp{seconds{static_cast<long long>(std::floor(v))}};
  }

  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':')
    return std::nullopt;
  int y, mo, d, h, mi, sec = 0;
  if (!detail::parse_uint(s.substr(0, 4), y) || !detail::parse_uint(s.substr(5, 2), mo) ||
      !detail::parse_uint(s.substr(8, 2), d) || !detail::parse_uint(s.substr(11, 2), h) ||
      !detail::parse_uint(s.substr(14, 2), mi))
    return std::nullopt;
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (!detail::parse_uint(s.substr(pos + 1, 2), sec)) return std::nullopt;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
  }
  int offset_min = 0;
  if (pos < s.size()) {
    const char c = s[pos];
    if (c == 'Z' && pos + 1 == s.size()) {
    } else if ((c == '+' || c == '-') && s.size() - pos >= 3) {
      int oh = 0, om = 0;
      std::string_view rest = s.substr(pos + 1);
      if (!detail::parse_uint(rest.substr(0, 2), oh)) return std::nullopt;
      rest.remove_prefix(2);
      if (!rest.empty() && rest.front() == ':') rest.remove_prefix(1);
      if (!rest.empty() && !detail::parse_uint(rest, om)) return std::nullopt;
      offset_min = (c == '+' ? 1 : -1) * (oh * 60 + om);
    } else {
      return std::nullopt;
    }
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
  return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec} - minutes{offset_min};
}

/// "YYYY-MM-DDTHH:MM:SSZ"
inline std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{ts - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Fraction of the (offset-shifted) day elapsed at ts, in [0, 1).
inline double hour_fraction(Timestamp ts, std::chrono::minutes utc_offset = std::chrono::minutes{0}) {
  using namespace std::chrono;
  const auto local = ts + utc_offset;
  const auto since_midnight = local - floor<days>(local);
  return static_cast<double>(since_midnight.count()) / 86400.0;
}

}  // namespace chsmm
