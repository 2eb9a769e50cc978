// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/plan.hpp"

#include <map>
#include <set>
#include <sstream>

#include "exptrial/error.hpp"
#include "exptrial/util.hpp"

namespace exptrial {

std::string_view validation_code_name(ValidationCode code) {
  switch (code) {
    case ValidationCode::BadIdHeaders: return "BAD_ID_HEADERS";
    case ValidationCode::ArityMismatch: return "ARITY_MISMATCH";
    case ValidationCode::DuplicateTrialKey: return "DUPLICATE_TRIAL_KEY";
    case ValidationCode::NonMonotonicTrials: return "NON_MONOTONIC_TRIALS";
    case ValidationCode::NoOutputColumns: return "NO_OUTPUT_COLUMNS";
    case ValidationCode::PartialOutputRow: return "PARTIAL_OUTPUT_ROW";
    case ValidationCode::DuplicateColumn: return "DUPLICATE_COLUMN";
  }
  return "UNKNOWN";
}

std::size_t ValidationReport::error_count() const {
  std::size_t n = 0;
  for (const auto& f : findings) {
    if (f.severity == Severity::Error) ++n;
  }
  return n;
}

std::size_t ValidationReport::warning_count() const {
  return findings.size() - error_count();
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const auto& f : findings) {
    out << (f.severity == Severity::Error ? "error" : "warning") << ' '
        << validation_code_name(f.code);
    if (f.row) out << " (row " << *f.row << ')';
    if (f.column) out << " (column " << *f.column << ')';
    out << ": " << f.message << '\n';
  }
  return out.str();
}

namespace {

void add(ValidationReport& report, Severity severity, ValidationCode code,
         std::optional<std::size_t> row, std::optional<std::string> column,
         std::string message) {
  report.findings.push_back(
      {severity, code, row, std::move(column), std::move(message)});
}

}  // namespace

ValidationReport validate_plan(const TrialPlan& plan,
                               std::size_t expected_inputs,
                               std::size_t expected_outputs) {
  ValidationReport report;
  const ColumnSchema& schema = plan.schema;

  if (schema.id_columns[0] != kParticipantColumn) {
    add(report, Severity::Error, ValidationCode::BadIdHeaders, std::nullopt,
        schema.id_columns[0],
        "first header must be \"" + std::string(kParticipantColumn) +
            "\", found \"" + schema.id_columns[0] + "\"");
  }
  if (schema.id_columns[1] != kTrialColumn) {
    add(report, Severity::Error, ValidationCode::BadIdHeaders, std::nullopt,
        schema.id_columns[1],
        "second header must be \"" + std::string(kTrialColumn) +
            "\", found \"" + schema.id_columns[1] + "\"");
  }

  std::set<std::string> seen_names;
  auto check_name = [&](const std::string& name) {
    if (!seen_names.insert(name).second) {
      add(report, Severity::Error, ValidationCode::DuplicateColumn,
          std::nullopt, name, "column name \"" + name + "\" appears twice");
    }
  };
  for (const auto& name : schema.id_columns) check_name(name);
  for (const auto& name : schema.input_columns) check_name(name);
  for (const auto& name : schema.output_columns) check_name(name);

  if (schema.output_count() == 0) {
    add(report, Severity::Error, ValidationCode::NoOutputColumns, std::nullopt,
        std::nullopt,
        "plan has no output columns, so no trial can ever be complete");
  }

  if (schema.input_count() != expected_inputs) {
    add(report, Severity::Error, ValidationCode::ArityMismatch, std::nullopt,
        std::nullopt,
        "schema has " + std::to_string(schema.input_count()) +
            " input columns, expected " + std::to_string(expected_inputs));
  }
  if (schema.output_count() != expected_outputs) {
    add(report, Severity::Error, ValidationCode::ArityMismatch, std::nullopt,
        std::nullopt,
        "schema has " + std::to_string(schema.output_count()) +
            " output columns, expected " + std::to_string(expected_outputs));
  }

  std::set<std::pair<std::uint64_t, std::uint64_t>> keys;
  std::map<std::uint64_t, std::uint64_t> last_trial;  // participant -> trial
  for (std::size_t i = 0; i < plan.rows.size(); ++i) {
    const TrialRecord& row = plan.rows[i];

    if (row.inputs.size() != schema.input_count()) {
      add(report, Severity::Error, ValidationCode::ArityMismatch, i,
          std::nullopt,
          "row has " + std::to_string(row.inputs.size()) +
              " input values, schema has " +
              std::to_string(schema.input_count()));
    }
    if (row.outputs.size() != schema.output_count()) {
      add(report, Severity::Error, ValidationCode::ArityMismatch, i,
          std::nullopt,
          "row has " + std::to_string(row.outputs.size()) +
              " output slots, schema has " +
              std::to_string(schema.output_count()));
    }

    if (!keys.insert({row.participant, row.trial_number}).second) {
      add(report, Severity::Error, ValidationCode::DuplicateTrialKey, i,
          std::nullopt,
          "duplicate (participant " + std::to_string(row.participant) +
              ", trial " + std::to_string(row.trial_number) + ")");
    }

    auto it = last_trial.find(row.participant);
    if (it != last_trial.end() && row.trial_number <= it->second) {
      add(report, Severity::Error, ValidationCode::NonMonotonicTrials, i,
          std::nullopt,
          "trial " + std::to_string(row.trial_number) + " for participant " +
              std::to_string(row.participant) + " does not increase (previous " +
              std::to_string(it->second) + ")");
    }
    last_trial[row.participant] = row.trial_number;

    std::size_t filled = 0;
    for (const auto& v : row.outputs) {
      if (v.has_value()) ++filled;
    }
    if (filled > 0 && filled < row.outputs.size()) {
      add(report, Severity::Warning, ValidationCode::PartialOutputRow, i,
          std::nullopt,
          "row has " + std::to_string(filled) + " of " +
              std::to_string(row.outputs.size()) +
              " outputs filled; it will be re-run on resume");
    }
  }

  return report;
}

std::vector<IndexedRow> participant_rows(const TrialPlan& plan,
                                         std::uint64_t participant) {
  std::vector<IndexedRow> out;
  for (std::size_t i = 0; i < plan.rows.size(); ++i) {
    if (plan.rows[i].participant == participant) {
      out.push_back({i, plan.rows[i]});
    }
  }
  return out;
}

ResumePoint find_resume_point(const TrialPlan& plan,
                              std::uint64_t participant) {
  std::size_t ordinal = 0;
  bool seen = false;
  for (std::size_t i = 0; i < plan.rows.size(); ++i) {
    const TrialRecord& row = plan.rows[i];
    if (row.participant != participant) continue;
    seen = true;
    if (!row.complete()) {
      return ResumeIndex{ordinal, i, row.trial_number};
    }
    ++ordinal;
  }
  if (!seen) {
    throw Error(ErrorCode::UnknownParticipant,
                "participant " + std::to_string(participant) +
                    " has no rows in the plan");
  }
  return std::nullopt;
}

TrialPlan mark_result(const TrialPlan& plan, std::size_t row_index,
                      const std::vector<std::string>& outputs) {
  if (row_index >= plan.rows.size()) {
    throw Error(ErrorCode::RowOutOfRange,
                "row " + std::to_string(row_index) + " out of range (" +
                    std::to_string(plan.rows.size()) + " rows)");
  }
  const std::size_t want = plan.schema.output_count();
  if (outputs.size() != want) {
    throw Error(ErrorCode::OutputArityMismatch,
                "got " + std::to_string(outputs.size()) + " outputs, plan has " +
                    std::to_string(want) + " output columns");
  }
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (is_blank(outputs[i])) {
      throw Error(ErrorCode::EmptyOutputValue,
                  "output \"" + plan.schema.output_columns[i] +
                      "\" is blank; blank cells mean \"not filled\"");
    }
  }

  TrialPlan next = plan;
  auto& slots = next.rows[row_index].outputs;
  slots.assign(outputs.begin(), outputs.end());
  return next;
}

}  // namespace exptrial
