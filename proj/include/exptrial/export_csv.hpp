// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Analysis-ready long-format export: one row per completed trial joining
// the plan's inputs with the journaled outputs, timestamps, and session
// ids. Read-only — exporting never touches plan or journal.

#pragma once

#include <string>

#include "exptrial/persistence.hpp"
#include "exptrial/plan.hpp"

namespace exptrial {

/// Joins plan and journal by (participant, trial_number), latest journal
/// entry winning, and renders completed trials in plan file order. Columns:
/// partiNumber, trialNumber, each input, each output, timestamp,
/// session_id. Rows completed by hand-editing the plan (never journaled)
/// export with empty timestamp and session_id. Journal entries for trials
/// absent from the plan are not exported.
std::string export_results_csv(const TrialPlan& plan,
                               const JournalContents& journal);

}  // namespace exptrial
