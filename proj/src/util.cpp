// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/util.hpp"

#include <sys/time.h>
#include <time.h>

#include <cctype>
#include <charconv>
#include <cstdio>
#include <random>

namespace exptrial {

bool is_blank(std::string_view s) {
  for (unsigned char c : s) {
    if (!std::isspace(c)) return false;
  }
  return true;
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
  if (s.empty()) return std::nullopt;
  for (unsigned char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

namespace {

struct SplitTime {
  struct tm tm;
  int millis;
};

SplitTime now_utc() {
  struct timeval tv;
  ::gettimeofday(&tv, nullptr);
  SplitTime out{};
  time_t secs = tv.tv_sec;
  ::gmtime_r(&secs, &out.tm);
  out.millis = static_cast<int>(tv.tv_usec / 1000);
  return out;
}

}  // namespace

std::string utc_timestamp_ms() {
  SplitTime t = now_utc();
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                t.tm.tm_year + 1900, t.tm.tm_mon + 1, t.tm.tm_mday,
                t.tm.tm_hour, t.tm.tm_min, t.tm.tm_sec, t.millis);
  return buf;
}

std::string make_session_id() {
  SplitTime t = now_utc();
  std::random_device rd;
  unsigned suffix = static_cast<unsigned>(rd()) & 0xFFFFFFu;
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02dT%02d%02d%02d.%03d-%06x",
                t.tm.tm_year + 1900, t.tm.tm_mon + 1, t.tm.tm_mday,
                t.tm.tm_hour, t.tm.tm_min, t.tm.tm_sec, t.millis, suffix);
  return buf;
}

}  // namespace exptrial
