// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// The runtime state machine: begin or resume a session on a plan file,
// serve the current trial's inputs, accept results, persist, advance,
// finish. Persistence ordering is journal-first, then plan rewrite — after
// a crash the journal can always reconstruct a filled row, so no recorded
// result is ever lost or re-served.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exptrial/persistence.hpp"
#include "exptrial/plan.hpp"

namespace exptrial {

struct SessionConfig {
  std::filesystem::path plan_path;
  std::uint64_t participant = 0;
  std::size_t input_count = 0;
  std::size_t output_count = 1;
  /// Trial number to start at, overriding automatic resume. Must exist for
  /// the participant. Pointing it at or before completed trials re-runs
  /// them, overwriting their outputs (the journal keeps the history).
  std::optional<std::uint64_t> start_from;
};

struct CurrentTrial {
  std::uint64_t trial_number = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // (column, value)
};

struct SessionStatus {
  std::size_t total = 0;
  std::size_t completed = 0;
  std::size_t remaining = 0;
  std::optional<std::uint64_t> current_trial;  // absent when finished
};

class Session {
 public:
  /// Locks the plan (unless EXPTRIAL_NO_LOCK=1), parses and validates it,
  /// positions the cursor (start_from override, else first INCOMPLETE row),
  /// and journals SESSION_START. Throws PLAN_INVALID, UNKNOWN_PARTICIPANT,
  /// BAD_START_FROM, ALREADY_LOCKED, STORAGE_FAILURE.
  static Session begin(const SessionConfig& config);

  Session(Session&&) = default;
  Session& operator=(Session&&) = default;

  const TrialPlan& plan() const { return plan_; }
  const std::string& session_id() const { return session_id_; }
  std::uint64_t participant() const { return participant_; }
  bool finished() const { return !cursor_.has_value(); }
  std::uint64_t completed_this_session() const {
    return completed_this_session_;
  }

  /// The cursor row's trial number and (input column, value) pairs, or
  /// nullopt when finished.
  std::optional<CurrentTrial> current_trial() const;

  SessionStatus status() const;

  /// Stale-lock holder this session displaced, if any (already journaled on
  /// the SESSION_START line; surfaced for CLI diagnostics).
  const std::optional<LockHolder>& stolen_lock() const { return stolen_lock_; }

  /// True when start_from placed the cursor at or before trials automatic
  /// resume would have skipped — recording will overwrite completed rows.
  bool start_from_rewinds() const { return start_from_rewinds_; }

  /// Where automatic resume would have started (nullopt: all complete).
  std::optional<std::uint64_t> auto_resume_trial() const {
    return auto_resume_trial_;
  }

  /// Journals a RESULT, rewrites the plan with the row filled, advances to
  /// the next INCOMPLETE row. On STORAGE_FAILURE in-memory state is
  /// unchanged; the journal-first ordering makes recovery safe. Throws
  /// SESSION_FINISHED, OUTPUT_ARITY_MISMATCH, EMPTY_OUTPUT_VALUE,
  /// STORAGE_FAILURE.
  void record_result(const std::vector<std::string>& outputs);

  /// Fills every output of the current row with "SKIPPED:<reason>" and
  /// advances like record_result, journaling a SKIP entry.
  void skip_trial(const std::string& reason);

  /// Journals SESSION_END and releases the lock. Idempotent.
  void end();

  /// Ends without SESSION_END and leaves the lock file on disk — the
  /// treatment of a transport that vanished mid-session. The lock becomes
  /// stale when this process exits and the next session steals it.
  void abandon();

 private:
  Session() = default;

  void persist_current(JournalKind kind,
                       const std::vector<std::string>& outputs);
  void advance();

  TrialPlan plan_;
  std::filesystem::path plan_path_;
  std::uint64_t participant_ = 0;
  std::string session_id_;
  std::vector<std::size_t> participant_rows_;  // indices into plan_.rows
  std::optional<std::size_t> cursor_;  // ordinal into participant_rows_
  std::uint64_t completed_this_session_ = 0;
  std::optional<LockHolder> stolen_lock_;
  bool start_from_rewinds_ = false;
  std::optional<std::uint64_t> auto_resume_trial_;
  std::optional<LockFile> lock_;
  std::optional<Journal> journal_;
  bool ended_ = false;
};

}  // namespace exptrial
