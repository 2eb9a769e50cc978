// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/session.hpp"

#include <cstdlib>
#include <cstring>

#include "exptrial/csv.hpp"
#include "exptrial/error.hpp"
#include "exptrial/util.hpp"
#include "faults.hpp"

namespace exptrial {

namespace {

bool locking_disabled() {
  const char* raw = std::getenv("EXPTRIAL_NO_LOCK");
  return raw && std::strcmp(raw, "1") == 0;
}

}  // namespace

Session Session::begin(const SessionConfig& config) {
  if (config.output_count < 1) {
    throw Error(ErrorCode::PlanInvalid, "output_count must be >= 1");
  }

  Session s;
  s.plan_path_ = config.plan_path;
  s.participant_ = config.participant;
  s.session_id_ = make_session_id();

  if (!locking_disabled()) {
    s.lock_.emplace(LockFile::acquire(config.plan_path, s.session_id_));
    if (s.lock_->stolen_from()) s.stolen_lock_ = s.lock_->stolen_from();
  }

  s.plan_ = parse_plan(read_file(config.plan_path), config.input_count,
                       config.output_count);
  ValidationReport report =
      validate_plan(s.plan_, config.input_count, config.output_count);
  if (report.error_count() > 0) {
    throw Error(ErrorCode::PlanInvalid, report.to_string());
  }

  for (std::size_t i = 0; i < s.plan_.rows.size(); ++i) {
    if (s.plan_.rows[i].participant == config.participant) {
      s.participant_rows_.push_back(i);
    }
  }
  if (s.participant_rows_.empty()) {
    throw Error(ErrorCode::UnknownParticipant,
                "plan has no rows for participant " +
                    std::to_string(config.participant));
  }

  const ResumePoint resume = find_resume_point(s.plan_, config.participant);
  if (resume) s.auto_resume_trial_ = resume->trial_number;
  if (config.start_from) {
    std::optional<std::size_t> target;
    for (std::size_t k = 0; k < s.participant_rows_.size(); ++k) {
      if (s.plan_.rows[s.participant_rows_[k]].trial_number ==
          *config.start_from) {
        target = k;
        break;
      }
    }
    if (!target) {
      throw Error(ErrorCode::BadStartFrom,
                  "participant " + std::to_string(config.participant) +
                      " has no trial " + std::to_string(*config.start_from));
    }
    s.cursor_ = target;
    // Starting at or before completed rows means re-running them.
    s.start_from_rewinds_ = !resume || *target < resume->participant_ordinal;
  } else if (resume) {
    s.cursor_ = resume->participant_ordinal;
  }

  s.journal_.emplace(Journal::open(journal_path_for(config.plan_path),
                                   s.plan_.schema.output_columns));
  std::string note;
  if (s.stolen_lock_) {
    note = "stole stale lock from pid " + std::to_string(s.stolen_lock_->pid) +
           " (session " + s.stolen_lock_->session_id + ")";
  }
  s.journal_->append(JournalKind::SessionStart, s.session_id_, s.participant_,
                     std::nullopt, {}, note);
  return s;
}

std::optional<CurrentTrial> Session::current_trial() const {
  if (!cursor_) return std::nullopt;
  const TrialRecord& row = plan_.rows[participant_rows_[*cursor_]];
  CurrentTrial current;
  current.trial_number = row.trial_number;
  current.inputs.reserve(row.inputs.size());
  for (std::size_t i = 0; i < row.inputs.size(); ++i) {
    current.inputs.emplace_back(plan_.schema.input_columns[i], row.inputs[i]);
  }
  return current;
}

SessionStatus Session::status() const {
  SessionStatus st;
  st.total = participant_rows_.size();
  for (std::size_t index : participant_rows_) {
    if (plan_.rows[index].complete()) ++st.completed;
  }
  st.remaining = st.total - st.completed;
  if (cursor_) {
    st.current_trial = plan_.rows[participant_rows_[*cursor_]].trial_number;
  }
  return st;
}

void Session::persist_current(JournalKind kind,
                              const std::vector<std::string>& outputs) {
  const std::size_t plan_row = participant_rows_[*cursor_];
  const TrialRecord& row = plan_.rows[plan_row];

  faults::maybe_crash("record.before_journal");
  journal_->append(kind, session_id_, row.participant, row.trial_number,
                   outputs);
  faults::maybe_crash("record.after_journal");

  // Fill on a copy and rewrite from it; commit to memory only after the
  // rewrite lands so a storage failure leaves this session's view unchanged.
  TrialPlan updated = mark_result(plan_, plan_row, outputs);
  atomic_rewrite(plan_path_, serialize_plan(updated));
  plan_ = std::move(updated);
  faults::maybe_crash("record.after_rewrite");

  advance();
  ++completed_this_session_;
}

void Session::advance() {
  std::size_t k = *cursor_ + 1;
  cursor_.reset();
  for (; k < participant_rows_.size(); ++k) {
    if (!plan_.rows[participant_rows_[k]].complete()) {
      cursor_ = k;
      return;
    }
  }
}

void Session::record_result(const std::vector<std::string>& outputs) {
  if (!cursor_) {
    throw Error(ErrorCode::SessionFinished,
                "all trials for participant " + std::to_string(participant_) +
                    " are complete");
  }
  if (outputs.size() != plan_.schema.output_count()) {
    throw Error(ErrorCode::OutputArityMismatch,
                "got " + std::to_string(outputs.size()) + " outputs, plan has " +
                    std::to_string(plan_.schema.output_count()) +
                    " output columns");
  }
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (is_blank(outputs[i])) {
      throw Error(ErrorCode::EmptyOutputValue,
                  "output \"" + plan_.schema.output_columns[i] +
                      "\" is blank; a blank cell means NOT RUN");
    }
  }
  persist_current(JournalKind::Result, outputs);
}

void Session::skip_trial(const std::string& reason) {
  if (!cursor_) {
    throw Error(ErrorCode::SessionFinished,
                "all trials for participant " + std::to_string(participant_) +
                    " are complete");
  }
  const std::vector<std::string> outputs(plan_.schema.output_count(),
                                         "SKIPPED:" + reason);
  persist_current(JournalKind::Skip, outputs);
}

void Session::end() {
  if (ended_) return;
  journal_->append(JournalKind::SessionEnd, session_id_, participant_,
                   std::nullopt, {});
  if (lock_) lock_->release();
  ended_ = true;
}

void Session::abandon() {
  if (ended_) return;
  if (lock_) lock_->abandon();
  ended_ = true;
}

}  // namespace exptrial
