// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/csv.hpp"

#include <charconv>
#include <utility>

#include "exptrial/error.hpp"
#include "exptrial/util.hpp"

namespace exptrial {
namespace csv {

std::string escape_cell(std::string_view cell) {
  bool needs_quotes = false;
  for (char c : cell) {
    if (c == kDelimiter || c == kQuote || c == '\n' || c == '\r') {
      needs_quotes = true;
      break;
    }
  }
  if (!needs_quotes) return std::string(cell);
  std::string out;
  out.reserve(cell.size() + 2);
  out.push_back(kQuote);
  for (char c : cell) {
    if (c == kQuote) out.push_back(kQuote);
    out.push_back(c);
  }
  out.push_back(kQuote);
  return out;
}

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.push_back(kDelimiter);
    out += escape_cell(cells[i]);
  }
  out.push_back('\n');
}

bool valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    std::size_t len;
    std::uint32_t cp;
    if (b0 < 0x80) {
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms, surrogates, and out-of-range code points.
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && cp < 0x800) return false;
    if (len == 4 && cp < 0x10000) return false;
    if (cp >= 0xD800 && cp <= 0xDFFF) return false;
    if (cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

namespace {

// Splits one terminated record's raw bytes (terminator excluded) into cells.
// The scanner has already verified quote balance, so this pass only unwraps.
std::vector<std::string> split_record(std::string_view raw,
                                      std::size_t record_number) {
  if (!valid_utf8(raw)) {
    throw Error(ErrorCode::MalformedCsv,
                "invalid UTF-8 in record " + std::to_string(record_number));
  }
  std::vector<std::string> cells;
  std::string cell;
  // States: Start (cell boundary), Plain (unquoted), Quoted, Closed (just
  // left a quoted cell; only a delimiter or end of record may follow).
  enum class S { Start, Plain, Quoted, Closed };
  S state = S::Start;
  std::size_t i = 0;
  const std::size_t n = raw.size();
  const auto stray = [record_number]() -> Error {
    return Error(ErrorCode::MalformedCsv,
                 "stray quote in record " + std::to_string(record_number));
  };
  while (i < n) {
    const char c = raw[i];
    switch (state) {
      case S::Start:
        if (c == kQuote) {
          state = S::Quoted;
        } else if (c == kDelimiter) {
          cells.emplace_back();
        } else {
          cell.push_back(c);
          state = S::Plain;
        }
        ++i;
        break;
      case S::Plain:
        if (c == kQuote) throw stray();
        if (c == kDelimiter) {
          cells.push_back(std::move(cell));
          cell.clear();
          state = S::Start;
        } else {
          cell.push_back(c);
        }
        ++i;
        break;
      case S::Quoted:
        if (c == kQuote) {
          if (i + 1 < n && raw[i + 1] == kQuote) {
            cell.push_back(kQuote);
            i += 2;
          } else {
            state = S::Closed;
            ++i;
          }
        } else {
          cell.push_back(c);
          ++i;
        }
        break;
      case S::Closed:
        if (c != kDelimiter) throw stray();
        cells.push_back(std::move(cell));
        cell.clear();
        state = S::Start;
        ++i;
        break;
    }
  }
  if (state == S::Quoted) {
    // Scanner guarantees balance within a terminated record; keep the throw
    // for direct callers feeding raw slices.
    throw Error(ErrorCode::MalformedCsv,
                "unterminated quoted cell in record " +
                    std::to_string(record_number));
  }
  cells.push_back(std::move(cell));
  return cells;
}

}  // namespace

Scan scan_records(std::string_view bytes) {
  if (bytes.substr(0, kBom.size()) == kBom) bytes.remove_prefix(kBom.size());

  Scan scan;
  std::size_t record_start = 0;
  bool in_quotes = false;
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  std::size_t record_number = 1;
  while (i < n) {
    const char c = bytes[i];
    if (c == kQuote) {
      if (in_quotes && i + 1 < n && bytes[i + 1] == kQuote) {
        i += 2;
        continue;
      }
      in_quotes = !in_quotes;
      ++i;
    } else if (c == '\n' && !in_quotes) {
      std::string_view raw = bytes.substr(record_start, i - record_start);
      if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
      scan.records.push_back(split_record(raw, record_number));
      ++record_number;
      ++i;
      record_start = i;
    } else {
      ++i;
    }
  }
  scan.tail = bytes.substr(record_start);
  return scan;
}

std::vector<std::vector<std::string>> parse_records(std::string_view bytes) {
  Scan scan = scan_records(bytes);
  if (!scan.tail.empty()) {
    // A final record without a trailing newline is accepted; rescan with a
    // synthetic terminator so an unbalanced quote is still an error.
    std::string padded(scan.tail);
    padded.push_back('\n');
    Scan last = scan_records(padded);
    if (!last.tail.empty() || last.records.size() != 1) {
      throw Error(ErrorCode::MalformedCsv,
                  "unterminated quoted cell in record " +
                      std::to_string(scan.records.size() + 1));
    }
    scan.records.push_back(std::move(last.records.front()));
  }
  return scan.records;
}

}  // namespace csv

namespace {

// A record is "empty" if it came from a blank line; blank lines between rows
// are not tolerated — only a harmless final one produced by the trailing LF.
bool is_empty_record(const std::vector<std::string>& record) {
  return record.size() == 1 && record[0].empty();
}

std::uint64_t parse_id_cell(const std::string& cell, std::string_view column,
                            std::size_t record_number) {
  auto value = parse_u64(cell);
  if (!value) {
    throw Error(ErrorCode::NonIntegerId,
                std::string(column) + " value \"" + cell + "\" in row " +
                    std::to_string(record_number) +
                    " is not a non-negative integer");
  }
  return *value;
}

}  // namespace

SchemaInfo sniff_schema(std::string_view bytes) {
  auto records = csv::parse_records(bytes);
  if (records.empty() || is_empty_record(records.front())) {
    throw Error(ErrorCode::EmptyFile, "plan file has no header row");
  }
  SchemaInfo info;
  info.header_names = records.front();
  info.total_columns = info.header_names.size();
  return info;
}

TrialPlan parse_plan(std::string_view bytes, std::size_t expected_inputs,
                     std::size_t expected_outputs) {
  auto records = csv::parse_records(bytes);
  if (records.empty() || is_empty_record(records.front())) {
    throw Error(ErrorCode::EmptyFile, "plan file has no header row");
  }

  const auto& header = records.front();
  const std::size_t minimum = 2 + expected_inputs + 1;
  if (header.size() < minimum) {
    throw Error(ErrorCode::HeaderArity,
                "header has " + std::to_string(header.size()) +
                    " columns; need at least " + std::to_string(minimum) +
                    " (2 ids + " + std::to_string(expected_inputs) +
                    " inputs + 1 output)");
  }
  (void)expected_outputs;  // checked by validate_plan, not here

  TrialPlan plan;
  plan.schema.id_columns = {header[0], header[1]};
  plan.schema.input_columns.assign(header.begin() + 2,
                                   header.begin() + 2 + expected_inputs);
  plan.schema.output_columns.assign(header.begin() + 2 + expected_inputs,
                                    header.end());

  const std::size_t width = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& record = records[r];
    const std::size_t record_number = r + 1;  // header is row 1
    if (is_empty_record(record)) {
      if (r + 1 == records.size()) break;  // trailing newline artifact
      throw Error(ErrorCode::RaggedRow,
                  "row " + std::to_string(record_number) + " is blank");
    }
    if (record.size() != width) {
      throw Error(ErrorCode::RaggedRow,
                  "row " + std::to_string(record_number) + " has " +
                      std::to_string(record.size()) + " cells; header has " +
                      std::to_string(width));
    }
    TrialRecord row;
    row.participant = parse_id_cell(record[0], plan.schema.id_columns[0],
                                    record_number);
    row.trial_number =
        parse_id_cell(record[1], plan.schema.id_columns[1], record_number);
    row.inputs.assign(record.begin() + 2, record.begin() + 2 + expected_inputs);
    row.outputs.reserve(plan.schema.output_count());
    for (std::size_t c = 2 + expected_inputs; c < width; ++c) {
      if (is_blank(record[c])) {
        row.outputs.emplace_back(std::nullopt);
      } else {
        row.outputs.emplace_back(record[c]);
      }
    }
    plan.rows.push_back(std::move(row));
  }
  return plan;
}

std::string serialize_plan(const TrialPlan& plan) {
  std::string out;
  std::vector<std::string> cells;
  cells.reserve(2 + plan.schema.input_count() + plan.schema.output_count());
  cells.push_back(plan.schema.id_columns[0]);
  cells.push_back(plan.schema.id_columns[1]);
  for (const auto& name : plan.schema.input_columns) cells.push_back(name);
  for (const auto& name : plan.schema.output_columns) cells.push_back(name);
  csv::append_row(out, cells);

  for (const auto& row : plan.rows) {
    cells.clear();
    cells.push_back(std::to_string(row.participant));
    cells.push_back(std::to_string(row.trial_number));
    for (const auto& value : row.inputs) cells.push_back(value);
    for (const auto& value : row.outputs) cells.push_back(value.value_or(""));
    csv::append_row(out, cells);
  }
  return out;
}

}  // namespace exptrial
