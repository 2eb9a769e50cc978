// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/export_csv.hpp"

#include <map>
#include <utility>

#include "exptrial/csv.hpp"
#include "exptrial/error.hpp"
#include "exptrial/util.hpp"

namespace exptrial {

std::string export_results_csv(const TrialPlan& plan,
                               const JournalContents& journal) {
  if (!journal.entries.empty() &&
      journal.output_columns != plan.schema.output_columns) {
    throw Error(ErrorCode::MalformedJournal,
                "journal output columns do not match the plan");
  }

  // Latest RESULT/SKIP per trial; entries arrive in ascending seq order.
  std::map<std::pair<std::uint64_t, std::uint64_t>, const JournalEntry*>
      latest;
  for (const auto& entry : journal.entries) {
    if (entry.kind != JournalKind::Result && entry.kind != JournalKind::Skip) {
      continue;
    }
    latest[{*entry.participant, *entry.trial_number}] = &entry;
  }

  std::string out;
  std::vector<std::string> cells;
  cells.push_back(plan.schema.id_columns[0]);
  cells.push_back(plan.schema.id_columns[1]);
  for (const auto& name : plan.schema.input_columns) cells.push_back(name);
  for (const auto& name : plan.schema.output_columns) cells.push_back(name);
  cells.emplace_back("timestamp");
  cells.emplace_back("session_id");
  csv::append_row(out, cells);

  for (const auto& row : plan.rows) {
    const auto it = latest.find({row.participant, row.trial_number});
    const JournalEntry* entry = it == latest.end() ? nullptr : it->second;

    // The exported view is the plan reconciled with the journal, so a crash
    // between journal append and plan rewrite still exports the trial.
    std::vector<std::optional<std::string>> outputs = row.outputs;
    if (!row.complete() && entry) {
      bool fillable = entry->outputs.size() == outputs.size();
      for (const auto& value : entry->outputs) {
        if (!value || is_blank(*value)) fillable = false;
      }
      if (fillable) outputs = entry->outputs;
    }
    bool complete = true;
    for (const auto& value : outputs) {
      if (!value || is_blank(*value)) complete = false;
    }
    if (!complete) continue;

    cells.clear();
    cells.push_back(std::to_string(row.participant));
    cells.push_back(std::to_string(row.trial_number));
    for (const auto& value : row.inputs) cells.push_back(value);
    for (const auto& value : outputs) cells.push_back(*value);
    cells.push_back(entry ? entry->timestamp : "");
    cells.push_back(entry ? entry->session_id : "");
    csv::append_row(out, cells);
  }
  return out;
}

}  // namespace exptrial
