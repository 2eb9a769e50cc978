// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/persistence.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>
#include <utility>

#include "exptrial/csv.hpp"
#include "exptrial/error.hpp"
#include "exptrial/util.hpp"
#include "faults.hpp"

namespace exptrial {

namespace {

[[noreturn]] void throw_storage(const std::string& action,
                                const std::filesystem::path& path) {
  throw Error(ErrorCode::StorageFailure,
              action + " " + path.string() + ": " + std::strerror(errno));
}

// write(2) until done; short writes are legal even on regular files.
void write_all(int fd, std::string_view bytes, const std::filesystem::path& p) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_storage("write", p);
    }
    off += static_cast<std::size_t>(n);
  }
}

void fsync_or_throw(int fd, const std::filesystem::path& p) {
  if (::fsync(fd) != 0) throw_storage("fsync", p);
}

// Directory fsync makes a create/rename itself durable, not just the data.
void fsync_dir(const std::filesystem::path& file_path) {
  std::filesystem::path dir = file_path.parent_path();
  if (dir.empty()) dir = ".";
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;  // best effort: some filesystems refuse dir opens
  ::fsync(fd);
  ::close(fd);
}

class FdGuard {
 public:
  explicit FdGuard(int fd) : fd_(fd) {}
  ~FdGuard() {
    if (fd_ >= 0) ::close(fd_);
  }
  int release() { return std::exchange(fd_, -1); }
  FdGuard(const FdGuard&) = delete;
  FdGuard& operator=(const FdGuard&) = delete;

 private:
  int fd_;
};

}  // namespace

std::filesystem::path journal_path_for(
    const std::filesystem::path& plan_path) {
  auto p = plan_path;
  p += ".journal";
  return p;
}

std::filesystem::path lock_path_for(const std::filesystem::path& plan_path) {
  auto p = plan_path;
  p += ".lock";
  return p;
}

std::filesystem::path meta_path_for(const std::filesystem::path& plan_path) {
  auto p = plan_path;
  p += ".meta";
  return p;
}

std::string read_file(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) throw_storage("open", path);
  FdGuard guard(fd);
  std::string out;
  char buf[1 << 16];
  for (;;) {
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_storage("read", path);
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

void atomic_rewrite(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());

  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw_storage("open temp for", path);
  try {
    FdGuard guard(fd);
    // Two half-writes so the mid-temp fault point leaves a real torn temp.
    const std::size_t half = bytes.size() / 2;
    write_all(fd, bytes.substr(0, half), tmp);
    faults::maybe_crash("rewrite.mid_temp");
    write_all(fd, bytes.substr(half), tmp);
    fsync_or_throw(fd, tmp);
  } catch (...) {
    ::unlink(tmp.c_str());
    throw;
  }

  faults::maybe_crash("rewrite.before_rename");
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    ::unlink(tmp.c_str());
    throw_storage("rename temp over", path);
  }
  fsync_dir(path);
}

std::string_view journal_kind_name(JournalKind kind) {
  switch (kind) {
    case JournalKind::SessionStart: return "SESSION_START";
    case JournalKind::Result: return "RESULT";
    case JournalKind::Skip: return "SKIP";
    case JournalKind::SessionEnd: return "SESSION_END";
  }
  return "?";
}

namespace {

constexpr std::string_view kFixedJournalHeader[] = {
    "seq", "kind", "session_id", "partiNumber", "trialNumber", "timestamp"};
constexpr std::size_t kFixedColumns = 6;
constexpr std::string_view kNoteColumn = "note";

std::optional<JournalKind> parse_kind(std::string_view name) {
  if (name == "SESSION_START") return JournalKind::SessionStart;
  if (name == "RESULT") return JournalKind::Result;
  if (name == "SKIP") return JournalKind::Skip;
  if (name == "SESSION_END") return JournalKind::SessionEnd;
  return std::nullopt;
}

[[noreturn]] void throw_malformed(std::size_t record_number,
                                  const std::string& what) {
  throw Error(ErrorCode::MalformedJournal,
              "journal record " + std::to_string(record_number) + ": " + what);
}

struct ParsedJournal {
  JournalContents contents;
  bool has_note_column = false;
  std::size_t healed_size = 0;  // byte length up to the last complete record
};

ParsedJournal parse_journal_bytes(std::string_view bytes) {
  ParsedJournal out;
  csv::Scan scan = csv::scan_records(bytes);
  out.contents.torn_tail = !scan.tail.empty();
  out.healed_size = bytes.size() - scan.tail.size();
  if (scan.records.empty()) return out;

  const auto& header = scan.records.front();
  if (header.size() < kFixedColumns + 1) {
    throw_malformed(1, "header has too few columns");
  }
  for (std::size_t i = 0; i < kFixedColumns; ++i) {
    if (header[i] != kFixedJournalHeader[i]) {
      throw_malformed(1, "header column " + std::to_string(i + 1) +
                             " is \"" + header[i] + "\", expected \"" +
                             std::string(kFixedJournalHeader[i]) + "\"");
    }
  }
  out.has_note_column = header.back() == kNoteColumn;
  const std::size_t output_end =
      out.has_note_column ? header.size() - 1 : header.size();
  if (output_end == kFixedColumns) {
    throw_malformed(1, "header declares no output columns");
  }
  out.contents.output_columns.assign(header.begin() + kFixedColumns,
                                     header.begin() + output_end);

  std::uint64_t last_seq = 0;
  for (std::size_t r = 1; r < scan.records.size(); ++r) {
    const auto& rec = scan.records[r];
    const std::size_t record_number = r + 1;
    if (rec.size() != header.size()) {
      throw_malformed(record_number,
                      "has " + std::to_string(rec.size()) +
                          " cells, header has " +
                          std::to_string(header.size()));
    }
    JournalEntry entry;
    const auto seq = parse_u64(rec[0]);
    if (!seq) throw_malformed(record_number, "bad seq \"" + rec[0] + "\"");
    entry.seq = *seq;
    if (entry.seq <= last_seq) {
      throw_malformed(record_number,
                      "seq " + rec[0] + " not greater than previous");
    }
    last_seq = entry.seq;

    const auto kind = parse_kind(rec[1]);
    if (!kind) throw_malformed(record_number, "unknown kind \"" + rec[1] + "\"");
    entry.kind = *kind;
    entry.session_id = rec[2];

    if (!rec[3].empty()) {
      const auto participant = parse_u64(rec[3]);
      if (!participant) {
        throw_malformed(record_number, "bad partiNumber \"" + rec[3] + "\"");
      }
      entry.participant = *participant;
    }
    if (!rec[4].empty()) {
      const auto trial = parse_u64(rec[4]);
      if (!trial) {
        throw_malformed(record_number, "bad trialNumber \"" + rec[4] + "\"");
      }
      entry.trial_number = *trial;
    }
    if ((entry.kind == JournalKind::Result ||
         entry.kind == JournalKind::Skip) &&
        (!entry.participant || !entry.trial_number)) {
      throw_malformed(record_number, "RESULT/SKIP without trial identity");
    }
    entry.timestamp = rec[5];
    entry.outputs.reserve(output_end - kFixedColumns);
    for (std::size_t c = kFixedColumns; c < output_end; ++c) {
      if (rec[c].empty()) {
        entry.outputs.emplace_back(std::nullopt);
      } else {
        entry.outputs.emplace_back(rec[c]);
      }
    }
    if (out.has_note_column) entry.note = rec.back();
    out.contents.entries.push_back(std::move(entry));
  }
  return out;
}

}  // namespace

JournalContents read_journal(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return {};
  return parse_journal_bytes(read_file(path)).contents;
}

Journal::Journal(std::filesystem::path path,
                 std::vector<std::string> output_columns,
                 std::uint64_t next_seq, bool header_written)
    : path_(std::move(path)),
      output_columns_(std::move(output_columns)),
      next_seq_(next_seq),
      header_written_(header_written) {}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

Journal::Journal(Journal&& other) noexcept
    : path_(std::move(other.path_)),
      output_columns_(std::move(other.output_columns_)),
      next_seq_(other.next_seq_),
      header_written_(other.header_written_),
      fd_(std::exchange(other.fd_, -1)) {}

Journal& Journal::operator=(Journal&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(other.path_);
    output_columns_ = std::move(other.output_columns_);
    next_seq_ = other.next_seq_;
    header_written_ = other.header_written_;
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

Journal Journal::open(const std::filesystem::path& path,
                      std::vector<std::string> output_columns) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    return Journal(path, std::move(output_columns), 1, false);
  }

  const std::string bytes = read_file(path);
  ParsedJournal parsed = parse_journal_bytes(bytes);

  if (parsed.contents.torn_tail) {
    // The torn line was never durably committed; drop it so appends extend a
    // well-formed file. Safe under the single-writer lock.
    if (::truncate(path.c_str(), static_cast<off_t>(parsed.healed_size)) !=
        0) {
      throw_storage("truncate torn tail of", path);
    }
  }

  const bool has_header = parsed.healed_size > 0 &&
                          !parsed.contents.output_columns.empty();
  if (has_header && parsed.contents.output_columns != output_columns) {
    std::string expected;
    for (const auto& name : output_columns) {
      if (!expected.empty()) expected += ", ";
      expected += name;
    }
    throw Error(ErrorCode::MalformedJournal,
                "journal output columns do not match the plan (expected: " +
                    expected + ")");
  }

  std::uint64_t next_seq = 1;
  if (!parsed.contents.entries.empty()) {
    next_seq = parsed.contents.entries.back().seq + 1;
  }
  return Journal(path, std::move(output_columns), next_seq, has_header);
}

std::uint64_t Journal::append(JournalKind kind, const std::string& session_id,
                              std::optional<std::uint64_t> participant,
                              std::optional<std::uint64_t> trial_number,
                              const std::vector<std::string>& outputs,
                              std::string_view note) {
  if (!outputs.empty() && outputs.size() != output_columns_.size()) {
    throw Error(ErrorCode::OutputArityMismatch,
                "journal entry carries " + std::to_string(outputs.size()) +
                    " outputs, journal has " +
                    std::to_string(output_columns_.size()) + " columns");
  }

  if (fd_ < 0) {
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw_storage("open journal", path_);
  }

  std::string payload;
  std::vector<std::string> cells;
  if (!header_written_) {
    cells.reserve(kFixedColumns + output_columns_.size() + 1);
    for (auto name : kFixedJournalHeader) cells.emplace_back(name);
    for (const auto& name : output_columns_) cells.push_back(name);
    cells.emplace_back(kNoteColumn);
    csv::append_row(payload, cells);
  }

  cells.clear();
  cells.push_back(std::to_string(next_seq_));
  cells.emplace_back(journal_kind_name(kind));
  cells.push_back(session_id);
  cells.push_back(participant ? std::to_string(*participant) : "");
  cells.push_back(trial_number ? std::to_string(*trial_number) : "");
  cells.push_back(utc_timestamp_ms());
  for (std::size_t i = 0; i < output_columns_.size(); ++i) {
    cells.push_back(i < outputs.size() ? outputs[i] : "");
  }
  cells.emplace_back(note);
  csv::append_row(payload, cells);

  write_all(fd_, payload, path_);
  fsync_or_throw(fd_, path_);
  if (!header_written_) {
    fsync_dir(path_);  // the first append may have created the file
    header_written_ = true;
  }
  return next_seq_++;
}

std::pair<TrialPlan, RecoveryReport> recover_plan(
    const std::filesystem::path& plan_path,
    const std::filesystem::path& journal_path, std::size_t expected_inputs,
    std::size_t expected_outputs) {
  TrialPlan plan =
      parse_plan(read_file(plan_path), expected_inputs, expected_outputs);
  ValidationReport report =
      validate_plan(plan, expected_inputs, expected_outputs);
  if (report.error_count() > 0) {
    throw Error(ErrorCode::PlanInvalid, report.to_string());
  }

  JournalContents journal = read_journal(journal_path);
  RecoveryReport recovery;
  recovery.torn_tail = journal.torn_tail;
  if (journal.entries.empty()) return {std::move(plan), std::move(recovery)};

  if (!journal.output_columns.empty() &&
      journal.output_columns != plan.schema.output_columns) {
    throw Error(ErrorCode::MalformedJournal,
                "journal output columns do not match the plan");
  }

  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> row_by_key;
  for (std::size_t i = 0; i < plan.rows.size(); ++i) {
    row_by_key.emplace(
        std::make_pair(plan.rows[i].participant, plan.rows[i].trial_number),
        i);
  }

  // Entries arrive seq-ascending, so overwriting leaves the latest per key.
  std::map<std::pair<std::uint64_t, std::uint64_t>, const JournalEntry*>
      latest;
  for (const auto& entry : journal.entries) {
    if (entry.kind != JournalKind::Result && entry.kind != JournalKind::Skip) {
      continue;
    }
    const auto key = std::make_pair(*entry.participant, *entry.trial_number);
    if (!row_by_key.count(key)) {
      recovery.orphans.push_back({entry.seq, key.first, key.second});
      continue;
    }
    latest[key] = &entry;
  }

  for (const auto& [key, entry] : latest) {
    const std::size_t row_index = row_by_key.at(key);
    TrialRecord& row = plan.rows[row_index];
    if (row.complete()) continue;  // plan already reflects it (or hand-edit)
    bool fillable = entry->outputs.size() == row.outputs.size();
    for (const auto& value : entry->outputs) {
      if (!value || is_blank(*value)) fillable = false;
    }
    if (!fillable) continue;  // cannot make the row COMPLETE; leave it
    row.outputs = entry->outputs;
    recovery.restored.push_back({key.first, key.second, row_index});
  }

  if (!recovery.restored.empty()) {
    atomic_rewrite(plan_path, serialize_plan(plan));
    recovery.rewritten = true;
  }
  return {std::move(plan), std::move(recovery)};
}

namespace {

std::optional<LockHolder> read_lock_holder(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    return std::nullopt;  // vanished or unreadable: treat as malformed
  }
  const auto first_nl = bytes.find('\n');
  if (first_nl == std::string::npos) return std::nullopt;
  auto rest = std::string_view(bytes).substr(first_nl + 1);
  const auto second_nl = rest.find('\n');
  if (second_nl != std::string_view::npos) rest = rest.substr(0, second_nl);
  const auto pid = parse_u64(std::string(rest));
  if (!pid) return std::nullopt;
  LockHolder holder;
  holder.session_id = bytes.substr(0, first_nl);
  holder.pid = static_cast<long>(*pid);
  return holder;
}

bool pid_alive(long pid) {
  if (pid <= 0) return false;
  if (::kill(static_cast<pid_t>(pid), 0) == 0) return true;
  return errno == EPERM;  // exists but owned by someone else
}

}  // namespace

LockFile LockFile::acquire(const std::filesystem::path& plan_path,
                           const std::string& session_id) {
  const std::filesystem::path lock_path = lock_path_for(plan_path);

  // Content is staged in a per-pid temp and link(2)ed into place, so a lock
  // file, once visible, is always complete — no window where a peer reads a
  // half-written holder and wrongly steals.
  std::filesystem::path staged = lock_path;
  staged += "." + std::to_string(::getpid());
  {
    const int fd = ::open(staged.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw_storage("open lock staging file", staged);
    FdGuard guard(fd);
    const std::string content =
        session_id + "\n" + std::to_string(::getpid()) + "\n";
    write_all(fd, content, staged);
    fsync_or_throw(fd, staged);
  }

  std::optional<LockHolder> stolen;
  for (int attempt = 0; attempt < 3; ++attempt) {
    if (::link(staged.c_str(), lock_path.c_str()) == 0) {
      ::unlink(staged.c_str());
      fsync_dir(lock_path);
      return LockFile(lock_path, std::move(stolen));
    }
    if (errno != EEXIST) {
      const int saved = errno;
      ::unlink(staged.c_str());
      errno = saved;
      throw_storage("create lock", lock_path);
    }

    auto holder = read_lock_holder(lock_path);
    if (holder && pid_alive(holder->pid)) {
      ::unlink(staged.c_str());
      throw Error(ErrorCode::AlreadyLocked,
                  "plan is locked by session " + holder->session_id +
                      " (pid " + std::to_string(holder->pid) + ")");
    }
    // Stale (holder dead) or unreadable: steal by removing and retrying.
    if (holder) stolen = std::move(holder);
    ::unlink(lock_path.c_str());
  }
  ::unlink(staged.c_str());
  throw Error(ErrorCode::AlreadyLocked,
              "could not acquire lock " + lock_path.string() +
                  " after repeated stale-lock churn");
}

LockFile::~LockFile() {
  if (owned_) ::unlink(path_.c_str());
}

LockFile::LockFile(LockFile&& other) noexcept
    : path_(std::move(other.path_)),
      stolen_from_(std::move(other.stolen_from_)),
      owned_(std::exchange(other.owned_, false)) {}

LockFile& LockFile::operator=(LockFile&& other) noexcept {
  if (this != &other) {
    if (owned_) ::unlink(path_.c_str());
    path_ = std::move(other.path_);
    stolen_from_ = std::move(other.stolen_from_);
    owned_ = std::exchange(other.owned_, false);
  }
  return *this;
}

void LockFile::release() {
  if (!owned_) return;
  ::unlink(path_.c_str());
  owned_ = false;
}

}  // namespace exptrial
