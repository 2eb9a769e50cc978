// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "faults.hpp"

#include <csignal>
#include <cstdlib>
#include <cstring>
#include <string>

namespace exptrial::faults {

namespace {

struct Armed {
  std::string point;
  unsigned long remaining = 0;  // 0 = disarmed
};

Armed parse_env() {
  Armed armed;
  const char* raw = std::getenv("EXPTRIAL_CRASH_AT");
  if (!raw || !*raw) return armed;
  const char* colon = std::strchr(raw, ':');
  if (colon) {
    armed.point.assign(raw, colon - raw);
    char* end = nullptr;
    const unsigned long k = std::strtoul(colon + 1, &end, 10);
    armed.remaining = (end && *end == '\0' && k >= 1) ? k : 1;
  } else {
    armed.point = raw;
    armed.remaining = 1;
  }
  return armed;
}

}  // namespace

void maybe_crash(const char* point) {
  static Armed armed = parse_env();
  if (armed.remaining == 0 || armed.point != point) return;
  if (--armed.remaining == 0) {
    // SIGKILL, not abort(): no signal handlers, no stdio flush, no atexit.
    std::raise(SIGKILL);
  }
}

}  // namespace exptrial::faults
