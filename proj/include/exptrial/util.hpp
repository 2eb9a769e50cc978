// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace exptrial {

/// True for empty strings and strings of ASCII whitespace only.
/// A blank output cell means "not filled"; see docs/formats.md.
bool is_blank(std::string_view s);

/// Strict non-negative decimal integer: digits only, no sign, no spaces.
std::optional<std::uint64_t> parse_u64(std::string_view s);

/// Current wall clock, UTC, ISO-8601 with milliseconds: 2026-08-15T10:30:00.123Z
std::string utc_timestamp_ms();

/// Opaque session token: compact UTC timestamp plus a random hex suffix.
std::string make_session_id();

}  // namespace exptrial
