// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Durable storage under a plan file: atomic rewrites, the append-only
// results journal, the session lock, and crash recovery reconciling the
// two. The plan file is the current state and resume source of truth; the
// journal is the audit trail and redo log. Every byte format is pinned in
// docs/formats.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "exptrial/plan.hpp"

namespace exptrial {

/// Sibling-file naming: everything a plan accumulates lives next to it.
std::filesystem::path journal_path_for(const std::filesystem::path& plan_path);
std::filesystem::path lock_path_for(const std::filesystem::path& plan_path);
std::filesystem::path meta_path_for(const std::filesystem::path& plan_path);

/// Whole-file read. Throws STORAGE_FAILURE with the OS detail.
std::string read_file(const std::filesystem::path& path);

/// Replaces the file's content all-or-nothing: write sibling temp, fsync,
/// rename over, fsync directory. After a crash at any instant the file holds
/// either the old bytes or the new bytes, never a mixture.
void atomic_rewrite(const std::filesystem::path& path, std::string_view bytes);

enum class JournalKind { SessionStart, Result, Skip, SessionEnd };

std::string_view journal_kind_name(JournalKind kind);

/// One journal line. Outputs are positional against the journal's own output
/// columns; markers (SESSION_START/SESSION_END) leave trial and outputs
/// absent. `note` carries free-text audit detail (e.g. a stale-lock steal).
struct JournalEntry {
  std::uint64_t seq = 0;
  JournalKind kind = JournalKind::Result;
  std::string session_id;
  std::optional<std::uint64_t> participant;
  std::optional<std::uint64_t> trial_number;
  std::string timestamp;
  std::vector<std::optional<std::string>> outputs;
  std::string note;
};

struct JournalContents {
  std::vector<std::string> output_columns;
  std::vector<JournalEntry> entries;
  bool torn_tail = false;
};

/// Reads every complete line; a final line cut mid-write is excluded and
/// reported as torn_tail, not an error. An absent or empty file is an empty
/// journal. Corruption before the final line throws MALFORMED_JOURNAL.
JournalContents read_journal(const std::filesystem::path& path);

/// Append handle for one journal file. Opening validates the header against
/// the plan's output columns, truncates away a torn final line (it was never
/// durably committed), and continues the sequence numbering. Each append is
/// one write + fsync; the file and its header are created on first append.
class Journal {
 public:
  static Journal open(const std::filesystem::path& path,
                      std::vector<std::string> output_columns);
  ~Journal();
  Journal(Journal&& other) noexcept;
  Journal& operator=(Journal&& other) noexcept;
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  /// Appends one entry and flushes it durably; returns its sequence number.
  /// `outputs` must be empty (markers) or match the output column count.
  std::uint64_t append(JournalKind kind, const std::string& session_id,
                       std::optional<std::uint64_t> participant,
                       std::optional<std::uint64_t> trial_number,
                       const std::vector<std::string>& outputs,
                       std::string_view note = {});

  const std::filesystem::path& path() const { return path_; }
  std::uint64_t next_seq() const { return next_seq_; }

 private:
  Journal(std::filesystem::path path, std::vector<std::string> output_columns,
          std::uint64_t next_seq, bool header_written);

  std::filesystem::path path_;
  std::vector<std::string> output_columns_;
  std::uint64_t next_seq_ = 1;
  bool header_written_ = false;
  int fd_ = -1;
};

struct RestoredTrial {
  std::uint64_t participant = 0;
  std::uint64_t trial_number = 0;
  std::size_t plan_row = 0;
};

struct OrphanEntry {
  std::uint64_t seq = 0;
  std::uint64_t participant = 0;
  std::uint64_t trial_number = 0;
};

struct RecoveryReport {
  std::vector<RestoredTrial> restored;
  std::vector<OrphanEntry> orphans;
  bool torn_tail = false;
  bool rewritten = false;
};

/// Replays the journal onto the plan: the latest RESULT/SKIP per
/// (participant, trial) fills that row when it is still INCOMPLETE. The
/// reconciled plan is rewritten atomically only when something was restored,
/// so an already-consistent pair leaves the plan bytes untouched. Journal
/// entries naming trials absent from the plan are reported as orphans.
std::pair<TrialPlan, RecoveryReport> recover_plan(
    const std::filesystem::path& plan_path,
    const std::filesystem::path& journal_path, std::size_t expected_inputs,
    std::size_t expected_outputs);

struct LockHolder {
  std::string session_id;
  long pid = 0;
};

/// Exclusive per-plan session lock: "<plan>.lock" holding two lines,
/// session_id then pid. Acquisition fails with ALREADY_LOCKED while the
/// holder process is alive; a lock whose process is gone is stale and is
/// stolen (recorded via stolen_from() so the session can journal it).
/// Destruction releases the lock unless abandon() was called — an abandoned
/// lock models a crashed session and is left for liveness-based stealing.
class LockFile {
 public:
  static LockFile acquire(const std::filesystem::path& plan_path,
                          const std::string& session_id);
  ~LockFile();
  LockFile(LockFile&& other) noexcept;
  LockFile& operator=(LockFile&& other) noexcept;
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

  void release();
  void abandon() { owned_ = false; }
  bool owned() const { return owned_; }

  /// Holder info of the stale lock this acquisition replaced, if any.
  const std::optional<LockHolder>& stolen_from() const { return stolen_from_; }

 private:
  LockFile(std::filesystem::path path, std::optional<LockHolder> stolen)
      : path_(std::move(path)), stolen_from_(std::move(stolen)), owned_(true) {}

  std::filesystem::path path_;
  std::optional<LockHolder> stolen_from_;
  bool owned_ = false;
};

}  // namespace exptrial
