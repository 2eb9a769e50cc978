// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// In-memory model of a trial plan: the experiment's pre-generated table of
// trials, one row per trial, id columns first, then stimulus inputs, then
// result slots. A row is COMPLETE once every result slot is filled; the
// resume point of a participant is their first row that is not.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace exptrial {

/// Mandatory names of the two leading id columns.
inline constexpr std::string_view kParticipantColumn = "partiNumber";
inline constexpr std::string_view kTrialColumn = "trialNumber";

/// Column names and roles. The split is positional: the first two columns
/// are ids, the next input_count() are stimulus settings, the rest are
/// result slots. id_columns holds what the file actually says so that
/// validation can flag headers that do not match the required names.
struct ColumnSchema {
  std::array<std::string, 2> id_columns{std::string(kParticipantColumn),
                                        std::string(kTrialColumn)};
  std::vector<std::string> input_columns;
  std::vector<std::string> output_columns;

  std::size_t input_count() const { return input_columns.size(); }
  std::size_t output_count() const { return output_columns.size(); }

  bool operator==(const ColumnSchema&) const = default;
};

/// One trial row. Output values are opaque text; an absent optional is an
/// empty cell in the file. The engine never interprets output values.
struct TrialRecord {
  std::uint64_t participant = 0;
  std::uint64_t trial_number = 0;
  std::vector<std::string> inputs;
  std::vector<std::optional<std::string>> outputs;

  /// COMPLETE = every output slot holds a value. Parsing normalizes blank
  /// cells to absent, so a held value is always non-blank.
  bool complete() const {
    for (const auto& v : outputs) {
      if (!v.has_value()) return false;
    }
    return true;
  }

  bool operator==(const TrialRecord&) const = default;
};

/// A whole plan. source_path is file identity only and is excluded from
/// equality; two plans are equal when schema and rows agree.
struct TrialPlan {
  ColumnSchema schema;
  std::vector<TrialRecord> rows;
  std::optional<std::filesystem::path> source_path;

  friend bool operator==(const TrialPlan& a, const TrialPlan& b) {
    return a.schema == b.schema && a.rows == b.rows;
  }
};

enum class Severity { Warning, Error };

enum class ValidationCode {
  BadIdHeaders,
  ArityMismatch,
  DuplicateTrialKey,
  NonMonotonicTrials,
  NoOutputColumns,
  PartialOutputRow,
  DuplicateColumn,
};

std::string_view validation_code_name(ValidationCode code);

struct Finding {
  Severity severity = Severity::Error;
  ValidationCode code = ValidationCode::ArityMismatch;
  std::optional<std::size_t> row;  // index into TrialPlan::rows
  std::optional<std::string> column;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;

  std::size_t error_count() const;
  std::size_t warning_count() const;
  /// A plan is runnable iff it validates with zero errors.
  bool runnable() const { return error_count() == 0; }
  /// Multi-line rendering, one finding per line; empty string when clean.
  std::string to_string() const;
};

/// Checks a structurally parsed plan against the expected shape. Problems
/// are reported, never thrown: BAD_ID_HEADERS, ARITY_MISMATCH,
/// DUPLICATE_TRIAL_KEY, NON_MONOTONIC_TRIALS, NO_OUTPUT_COLUMNS,
/// DUPLICATE_COLUMN (errors) and PARTIAL_OUTPUT_ROW (warning).
ValidationReport validate_plan(const TrialPlan& plan,
                               std::size_t expected_inputs,
                               std::size_t expected_outputs);

struct IndexedRow {
  std::size_t row;  // index into TrialPlan::rows
  TrialRecord record;
};

/// Rows belonging to one participant, in file order. Empty if absent.
std::vector<IndexedRow> participant_rows(const TrialPlan& plan,
                                         std::uint64_t participant);

/// Where a restarted session picks up. participant_ordinal is the position
/// within the participant's own row subsequence; plan_row indexes
/// TrialPlan::rows directly (what mark_result takes).
struct ResumeIndex {
  std::size_t participant_ordinal = 0;
  std::size_t plan_row = 0;
  std::uint64_t trial_number = 0;
};

/// nullopt means every trial for the participant is COMPLETE.
using ResumePoint = std::optional<ResumeIndex>;

/// First INCOMPLETE row for the participant, in file order. A row with any
/// empty output slot counts as incomplete: a partially written row means
/// the trial did not finish cleanly and is re-run rather than skipped.
/// Throws UNKNOWN_PARTICIPANT when the participant has no rows.
ResumePoint find_resume_point(const TrialPlan& plan, std::uint64_t participant);

/// Returns a copy of the plan with row_index's outputs filled; every other
/// row is untouched. Values must be non-blank: an empty output would be
/// indistinguishable from "not filled". Throws ROW_OUT_OF_RANGE,
/// OUTPUT_ARITY_MISMATCH, EMPTY_OUTPUT_VALUE.
TrialPlan mark_result(const TrialPlan& plan, std::size_t row_index,
                      const std::vector<std::string>& outputs);

}  // namespace exptrial
