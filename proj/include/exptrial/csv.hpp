// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reader/writer for the plan file format and the shared cell escaping used
// by the journal. One fixed dialect: comma delimiter, double-quote quoting
// with doubled internal quotes, UTF-8, LF on write, LF or CRLF on read,
// mandatory header row. A leading UTF-8 BOM is consumed on read and never
// written. Canonical output is stable: serialize(parse(serialize(p))) is
// byte-identical to serialize(p). See docs/formats.md.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "exptrial/plan.hpp"

namespace exptrial {

namespace csv {

inline constexpr char kDelimiter = ',';
inline constexpr char kQuote = '"';
inline constexpr std::string_view kBom = "\xEF\xBB\xBF";

/// Quotes a cell only when it contains a delimiter, quote, CR, or LF;
/// internal quotes are doubled.
std::string escape_cell(std::string_view cell);

/// Appends one escaped row plus the LF terminator.
void append_row(std::string& out, const std::vector<std::string>& cells);

/// Result of scanning a byte buffer into CSV records. `records` holds every
/// LF-terminated record (quote-aware, so quoted cells may span lines);
/// `tail` is whatever follows the last terminator — a partial record from a
/// torn write, or a final record missing its newline. Scanning throws
/// MALFORMED_CSV only for real corruption inside terminated records
/// (unbalanced or stray quotes, invalid UTF-8); a truncated valid file
/// always lands in `tail` instead.
struct Scan {
  std::vector<std::vector<std::string>> records;
  std::string_view tail;
};

Scan scan_records(std::string_view bytes);

/// Strict variant for plan files: a non-empty tail must itself form one
/// well-formed record (final newline optional) or MALFORMED_CSV is thrown.
std::vector<std::vector<std::string>> parse_records(std::string_view bytes);

bool valid_utf8(std::string_view bytes);

}  // namespace csv

/// Shape of a plan file's header, reported without touching data rows.
struct SchemaInfo {
  std::size_t total_columns = 0;
  std::vector<std::string> header_names;
};

/// Header cell count and names only. Throws MALFORMED_CSV, EMPTY_FILE.
SchemaInfo sniff_schema(std::string_view bytes);

/// Parses a plan file. The header is split positionally: columns 0-1 are the
/// ids, the next expected_inputs columns are inputs, and every remaining
/// column is an output (validate_plan flags a count mismatch). Blank output
/// cells become absent values. Row numbers in diagnostics count CSV records
/// from 1, header included. Throws MALFORMED_CSV, EMPTY_FILE, HEADER_ARITY,
/// RAGGED_ROW, NON_INTEGER_ID.
TrialPlan parse_plan(std::string_view bytes, std::size_t expected_inputs,
                     std::size_t expected_outputs);

/// Canonical byte form: header, then rows in order, LF-terminated, absent
/// outputs as empty cells, minimal quoting.
std::string serialize_plan(const TrialPlan& plan);

}  // namespace exptrial
