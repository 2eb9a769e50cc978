// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Eight independent end-to-end checks, each printing one
// PASS/FAIL line; the process exits with the number of failures. Every
// check verifies behavior against an oracle computed here, not against the
// code under test.

#include <sys/types.h>

#include <algorithm>
#include <csignal>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "exptrial/csv.hpp"
#include "exptrial/generator.hpp"
#include "exptrial/persistence.hpp"
#include "exptrial/plan.hpp"
#include "exptrial/session.hpp"
#include "subprocess.hpp"
#include "temp_dir.hpp"

using namespace exptrial;
using testsupport::ChildProcess;
using testsupport::RunResult;
using testsupport::SpawnOptions;
using testsupport::TempDir;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

Outcome fail(std::string detail) { return {false, std::move(detail)}; }

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::string> split_lines(std::string_view bytes) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] == '\n') {
      lines.emplace_back(bytes.substr(start, i - start));
      start = i + 1;
    }
  }
  if (start < bytes.size()) lines.emplace_back(bytes.substr(start));
  return lines;
}

// Whitespace-only cells mean "not filled"; mirror of the engine's rule,
// kept separate so the checks below stand on their own.
bool cell_blank(std::string_view cell) {
  for (char c : cell) {
    if (c != ' ' && c != '\t') return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// 1. Resume-point selection vs. a brute-force replay of the file.

Outcome check_resume_oracle() {
  std::mt19937_64 rng(0xAC1);
  const std::vector<std::string> out_cells = {"",   " ",   "\t ", "ok",
                                              "v7", "yes", "141"};
  for (int iter = 0; iter < 1000; ++iter) {
    const int n_inputs = static_cast<int>(rng() % 3);
    const int n_outputs = 1 + static_cast<int>(rng() % 4);
    const std::uint64_t id_pool[] = {1, 2, 3, 7, 12, 40};
    const int n_parts = 1 + static_cast<int>(rng() % 3);
    std::vector<std::uint64_t> parts(id_pool, id_pool + 6);
    std::shuffle(parts.begin(), parts.end(), rng);
    parts.resize(static_cast<std::size_t>(n_parts));

    // Row skeletons, interleaved across participants, trials increasing.
    struct RawRow {
      std::uint64_t part;
      std::uint64_t trial;
      std::vector<std::string> outs;
    };
    std::vector<RawRow> raw;
    std::map<std::uint64_t, std::uint64_t> next_trial;
    std::map<std::uint64_t, int> budget;
    int total = 0;
    for (auto p : parts) {
      budget[p] = 1 + static_cast<int>(rng() % 16);
      next_trial[p] = 1 + rng() % 3;
      total += budget[p];
    }
    while (total > 50) {  // keep plans within the small-session envelope
      budget[parts[rng() % parts.size()]] = 1;
      total = 0;
      for (auto p : parts) total += budget[p];
    }
    const bool force_complete = rng() % 4 == 0;
    while (total > 0) {
      const auto p = parts[rng() % parts.size()];
      if (budget[p] == 0) continue;
      budget[p] -= 1;
      total -= 1;
      RawRow row;
      row.part = p;
      row.trial = next_trial[p];
      next_trial[p] += 1 + rng() % 2;
      for (int k = 0; k < n_outputs; ++k) {
        std::string cell = out_cells[rng() % out_cells.size()];
        if (force_complete && cell_blank(cell)) cell = "done";
        row.outs.push_back(std::move(cell));
      }
      raw.push_back(std::move(row));
    }

    std::string text = "partiNumber,trialNumber";
    for (int k = 0; k < n_inputs; ++k) text += ",in" + std::to_string(k);
    for (int k = 0; k < n_outputs; ++k) text += ",out" + std::to_string(k);
    text += "\n";
    for (const auto& row : raw) {
      text += std::to_string(row.part) + "," + std::to_string(row.trial);
      for (int k = 0; k < n_inputs; ++k) text += ",x";
      for (const auto& cell : row.outs) text += "," + cell;
      text += "\n";
    }

    const TrialPlan plan =
        parse_plan(text, static_cast<std::size_t>(n_inputs),
                   static_cast<std::size_t>(n_outputs));

    for (auto p : parts) {
      // Brute force: first row for p, in file order, with any blank output.
      std::optional<std::uint64_t> want_ordinal, want_row, want_trial;
      std::uint64_t ordinal = 0;
      for (std::size_t r = 0; r < raw.size(); ++r) {
        if (raw[r].part != p) continue;
        bool complete = true;
        for (const auto& cell : raw[r].outs) {
          if (cell_blank(cell)) complete = false;
        }
        if (!complete && !want_ordinal) {
          want_ordinal = ordinal;
          want_row = r;
          want_trial = raw[r].trial;
        }
        ++ordinal;
      }

      const ResumePoint got = find_resume_point(plan, p);
      if (got.has_value() != want_ordinal.has_value()) {
        return fail("iteration " + std::to_string(iter) + " participant " +
                    std::to_string(p) + ": presence mismatch");
      }
      if (got &&
          (got->participant_ordinal != *want_ordinal ||
           got->plan_row != *want_row || got->trial_number != *want_trial)) {
        return fail("iteration " + std::to_string(iter) + " participant " +
                    std::to_string(p) + ": expected trial " +
                    std::to_string(*want_trial) + ", got " +
                    std::to_string(got->trial_number));
      }
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// 2. Kill the recorder at every fault point; journaled results must never
//    be re-served after recovery.

Outcome check_crash_recovery() {
  const char* points[] = {"record.before_journal", "record.after_journal",
                          "rewrite.mid_temp", "rewrite.before_rename",
                          "record.after_rewrite"};
  constexpr int kTrials = 50;

  std::string plan_text = "partiNumber,trialNumber,i,resp\n";
  for (int t = 1; t <= kTrials; ++t) {
    plan_text += "1," + std::to_string(t) + ",i" + std::to_string(t) + ",\n";
  }

  int kills = 0;
  for (const char* point : points) {
    for (int k = 1; k <= kTrials; ++k) {
      TempDir dir;
      const auto plan_path = dir.file("plan.csv");
      write_file(plan_path, plan_text);

      SpawnOptions options;
      options.argv = {CRASH_CHILD_BIN,
                      "--plan",
                      plan_path.string(),
                      "--participant",
                      "1",
                      "--inputs",
                      "1",
                      "--outputs",
                      "1",
                      "--count",
                      std::to_string(kTrials)};
      options.env = {{"EXPTRIAL_CRASH_AT",
                      std::string(point) + ":" + std::to_string(k)}};
      const RunResult run = run_process(options);
      if (!run.killed_by(SIGKILL)) {
        return fail(std::string(point) + ":" + std::to_string(k) +
                    " did not die at the fault point (exit " +
                    std::to_string(run.exit_code) + ")");
      }
      ++kills;

      // What the journal promises: every RESULT row it holds.
      const JournalContents journal =
          read_journal(journal_path_for(plan_path));
      std::set<std::uint64_t> journaled;
      for (const auto& entry : journal.entries) {
        if (entry.kind == JournalKind::Result && entry.trial_number) {
          journaled.insert(*entry.trial_number);
        }
      }

      const auto [recovered, report] =
          recover_plan(plan_path, journal_path_for(plan_path), 1, 1);
      (void)report;
      const auto rows = participant_rows(recovered, 1);
      for (auto t : journaled) {
        const auto& rec = rows[t - 1].record;
        const std::string want = "r" + std::to_string(t) + ".1";
        if (!rec.complete() || rec.outputs[0] != want) {
          return fail(std::string(point) + ":" + std::to_string(k) +
                      " lost journaled trial " + std::to_string(t));
        }
      }

      // A fresh session must pick up after the last journaled trial: the
      // only permissible repeat is the in-flight trial, which by
      // construction never reached the journal.
      SessionConfig config;
      config.plan_path = plan_path;
      config.participant = 1;
      config.input_count = 1;
      config.output_count = 1;
      Session session = Session::begin(config);
      const auto current = session.current_trial();
      const std::uint64_t expect_next =
          static_cast<std::uint64_t>(journaled.size()) + 1;
      if (journaled.size() == static_cast<std::size_t>(kTrials)) {
        if (current) {
          session.end();
          return fail(std::string(point) + ":" + std::to_string(k) +
                      " resumed a finished session");
        }
      } else if (!current || current->trial_number != expect_next ||
                 journaled.count(current->trial_number) != 0) {
        session.end();
        return fail(std::string(point) + ":" + std::to_string(k) +
                    " resumed at the wrong trial");
      }
      session.end();
    }
  }
  if (kills < 200) {
    return fail("only " + std::to_string(kills) + " fault-point kills");
  }
  return {};
}

// ---------------------------------------------------------------------------
// 3. Plan codec: parse(serialize(P)) == P and byte idempotence, with hostile
//    cell content and an optional byte-order mark.

Outcome check_codec_roundtrip() {
  std::mt19937_64 rng(0xAC3);
  const std::vector<std::string> tokens = {
      "a",   "Z",  "7",    ",",   "\"",  "\n",  "\r",  " ",
      "\t",  "é",  "→",    "𝄞",  "x,y", "\"\"", "end\n", "_"};
  // Output slots may hold only non-blank values (any whitespace-only cell
  // reads back as "not filled"), so filled cells get a visible character.
  auto whitespace_only = [](const std::string& cell) {
    for (unsigned char c : cell) {
      if (!std::isspace(c)) return false;
    }
    return true;
  };
  auto random_cell = [&](bool must_fill) {
    std::string cell;
    const int parts = static_cast<int>(rng() % 5);
    for (int i = 0; i < parts; ++i) cell += tokens[rng() % tokens.size()];
    if (must_fill && whitespace_only(cell)) cell = "q" + cell;
    return cell;
  };
  const std::vector<std::string> names = {"plain", "we,ird", "qu\"ote",
                                          "two\nline", "é→"};

  for (int iter = 0; iter < 10000; ++iter) {
    TrialPlan plan;
    const int n_inputs = static_cast<int>(rng() % 4);
    const int n_outputs = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < n_inputs; ++k) {
      plan.schema.input_columns.push_back(names[rng() % names.size()] +
                                          std::to_string(k));
    }
    for (int k = 0; k < n_outputs; ++k) {
      plan.schema.output_columns.push_back("o" + std::to_string(k));
    }
    const int n_rows = static_cast<int>(rng() % 11);
    std::uint64_t part = 1 + rng() % 3;
    std::uint64_t trial = 1;
    for (int r = 0; r < n_rows; ++r) {
      if (rng() % 4 == 0) {
        part += 1 + rng() % 2;
        trial = 1;
      }
      TrialRecord rec;
      rec.participant = part;
      rec.trial_number = trial;
      trial += 1 + rng() % 2;
      for (int k = 0; k < n_inputs; ++k) {
        rec.inputs.push_back(random_cell(false));
      }
      for (int k = 0; k < n_outputs; ++k) {
        if (rng() % 2 == 0) {
          rec.outputs.emplace_back(random_cell(true));
        } else {
          rec.outputs.emplace_back(std::nullopt);
        }
      }
      plan.rows.push_back(std::move(rec));
    }

    const std::string text = serialize_plan(plan);
    const TrialPlan back = parse_plan(text, static_cast<std::size_t>(n_inputs),
                                      static_cast<std::size_t>(n_outputs));
    if (!(back == plan)) {
      return fail("iteration " + std::to_string(iter) +
                  ": parse(serialize(P)) != P");
    }
    if (serialize_plan(back) != text) {
      return fail("iteration " + std::to_string(iter) +
                  ": serialize not idempotent");
    }
    const TrialPlan bommed =
        parse_plan("\xEF\xBB\xBF" + text, static_cast<std::size_t>(n_inputs),
                   static_cast<std::size_t>(n_outputs));
    if (!(bommed == plan) || serialize_plan(bommed) != text) {
      return fail("iteration " + std::to_string(iter) +
                  ": byte-order mark not transparent");
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// 4. Truncate a journal at every byte offset: reads never fail, the torn
//    flag is exact, and opening heals the file back to a record boundary.

Outcome check_truncation_sweep() {
  TempDir dir;
  const auto source = dir.file("t.journal");
  {
    auto journal = Journal::open(source, {"resp"});
    journal.append(JournalKind::SessionStart, "sess-sim", std::nullopt,
                   std::nullopt, {}, "fresh run");
    journal.append(JournalKind::Result, "sess-sim", 1, 1, {"plain"});
    journal.append(JournalKind::Result, "sess-sim", 1, 2, {"a,b\"c\nd"});
    journal.append(JournalKind::Skip, "sess-sim", 1, 3,
                   {"SKIPPED:wire, loose"});
    journal.append(JournalKind::Result, "sess-sim", 1, 2, {"redo\nline"});
    journal.append(JournalKind::SessionEnd, "sess-sim", std::nullopt,
                   std::nullopt, {});
  }
  const std::string full = read_file(source);

  // Independent record scan: a quote toggles quoting; a newline outside
  // quotes ends a record. Boundary = offset just past such a newline.
  std::vector<std::size_t> boundaries;
  bool quoted = false;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (full[i] == '"') quoted = !quoted;
    if (full[i] == '\n' && !quoted) boundaries.push_back(i + 1);
  }
  if (boundaries.size() != 7 || boundaries.back() != full.size()) {
    return fail("journal under test has unexpected shape");
  }

  const auto cut_path = dir.file("cut.journal");
  for (std::size_t len = 0; len <= full.size(); ++len) {
    write_file(cut_path, std::string_view(full).substr(0, len));

    std::size_t clean = 0;  // terminated records within the prefix
    for (auto b : boundaries) {
      if (b <= len) ++clean;
    }
    const bool expect_torn =
        len > 0 && !std::binary_search(boundaries.begin(), boundaries.end(),
                                       len);
    const std::size_t expect_entries = clean > 0 ? clean - 1 : 0;

    JournalContents contents;
    try {
      contents = read_journal(cut_path);
    } catch (const std::exception& e) {
      return fail("read threw at offset " + std::to_string(len) + ": " +
                  e.what());
    }
    if (contents.torn_tail != expect_torn) {
      return fail("torn flag wrong at offset " + std::to_string(len));
    }
    if (contents.entries.size() != expect_entries) {
      return fail("entry count wrong at offset " + std::to_string(len));
    }

    // Healing: open truncates the torn tail and leaves an appendable file.
    std::size_t healed_size = 0;
    for (auto b : boundaries) {
      if (b <= len) healed_size = b;
    }
    try {
      Journal::open(cut_path, {"resp"});
    } catch (const std::exception& e) {
      return fail("open threw at offset " + std::to_string(len) + ": " +
                  e.what());
    }
    if (std::filesystem::file_size(cut_path) != healed_size) {
      return fail("healing left the wrong size at offset " +
                  std::to_string(len));
    }
    if (read_journal(cut_path).torn_tail) {
      return fail("still torn after healing at offset " +
                  std::to_string(len));
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// 5. Generated designs: condition multisets are conserved for every method,
//    Latin rows/columns are permutations, and equal seeds give equal bytes.

Outcome check_generator_conservation() {
  std::mt19937_64 rng(0xAC5);
  const std::vector<std::vector<int>> latin_shapes = {
      {2}, {3}, {5}, {2, 2}, {2, 3}, {2, 4}, {3, 4}, {2, 2, 3}, {12}};

  for (int iter = 0; iter < 500; ++iter) {
    const auto method = static_cast<Method>(rng() % 3);
    DesignSpec spec;
    spec.method = method;
    spec.output_columns = {"resp"};
    if (rng() % 3 == 0) spec.output_columns.push_back("rt");
    spec.repetitions = 1 + rng() % 3;

    std::vector<int> shape;
    if (method == Method::LatinSquare) {
      shape = latin_shapes[rng() % latin_shapes.size()];
    } else {
      const int n_factors = 1 + static_cast<int>(rng() % 3);
      for (int f = 0; f < n_factors; ++f) {
        shape.push_back(1 + static_cast<int>(rng() % 4));
      }
    }
    std::size_t n_conditions = 1;
    for (int f = 0; f < static_cast<int>(shape.size()); ++f) {
      Factor factor;
      factor.name = "f" + std::to_string(f);
      for (int l = 0; l < shape[static_cast<std::size_t>(f)]; ++l) {
        factor.levels.push_back("f" + std::to_string(f) + "v" +
                                std::to_string(l));
      }
      n_conditions *= factor.levels.size();
      spec.factors.push_back(std::move(factor));
    }
    if (method == Method::LatinSquare) {
      for (std::uint64_t p = 1; p <= n_conditions; ++p) {
        spec.participants.push_back(p);
      }
    } else {
      const int n_parts = 1 + static_cast<int>(rng() % 4);
      for (int p = 0; p < n_parts; ++p) {
        spec.participants.push_back(static_cast<std::uint64_t>(p) * 3 + 1);
      }
    }

    // The condition multiset, built straight from the factor definition.
    std::vector<std::vector<std::string>> conditions = {{}};
    for (const auto& factor : spec.factors) {
      std::vector<std::vector<std::string>> next;
      for (const auto& prefix : conditions) {
        for (const auto& level : factor.levels) {
          auto tuple = prefix;
          tuple.push_back(level);
          next.push_back(std::move(tuple));
        }
      }
      conditions = std::move(next);
    }
    std::multiset<std::vector<std::string>> per_rep(conditions.begin(),
                                                    conditions.end());
    std::multiset<std::vector<std::string>> whole;
    for (std::uint64_t r = 0; r < spec.repetitions; ++r) {
      whole.insert(conditions.begin(), conditions.end());
    }

    const std::uint64_t seed = rng();
    const TrialPlan plan = generate_plan(spec, seed);
    if (serialize_plan(generate_plan(spec, seed)) != serialize_plan(plan)) {
      return fail("iteration " + std::to_string(iter) +
                  ": same seed, different bytes");
    }

    std::map<std::uint64_t, std::vector<std::vector<std::string>>> sequences;
    for (const auto& row : plan.rows) {
      for (const auto& slot : row.outputs) {
        if (slot.has_value()) {
          return fail("iteration " + std::to_string(iter) +
                      ": generated row arrived pre-filled");
        }
      }
      sequences[row.participant].push_back(row.inputs);
    }
    if (sequences.size() != spec.participants.size()) {
      return fail("iteration " + std::to_string(iter) +
                  ": participant count mismatch");
    }

    for (const auto& [participant, sequence] : sequences) {
      if (std::multiset<std::vector<std::string>>(sequence.begin(),
                                                  sequence.end()) != whole) {
        return fail("iteration " + std::to_string(iter) + ": participant " +
                    std::to_string(participant) +
                    " lost or duplicated conditions");
      }
      const bool blockwise = method != Method::Shuffle;
      if (blockwise) {
        for (std::size_t off = 0; off + n_conditions <= sequence.size();
             off += n_conditions) {
          std::multiset<std::vector<std::string>> window(
              sequence.begin() + static_cast<std::ptrdiff_t>(off),
              sequence.begin() + static_cast<std::ptrdiff_t>(off) +
                  static_cast<std::ptrdiff_t>(n_conditions));
          if (window != per_rep) {
            return fail("iteration " + std::to_string(iter) +
                        ": block is not one copy of each condition");
          }
        }
      }
    }

    if (method == Method::LatinSquare) {
      // Rows checked above (each block is a permutation); columns next.
      // Participants were chosen as 1..order, giving a full square.
      for (std::size_t c = 0; c < n_conditions; ++c) {
        std::set<std::vector<std::string>> column;
        for (std::uint64_t p = 1; p <= n_conditions; ++p) {
          column.insert(sequences[p][c]);
        }
        if (column.size() != n_conditions) {
          return fail("iteration " + std::to_string(iter) + ": column " +
                      std::to_string(c) + " repeats a condition");
        }
      }
      // Repetitions replay the participant's row verbatim.
      for (std::uint64_t p = 1; p <= n_conditions; ++p) {
        const auto& sequence = sequences[p];
        for (std::size_t i = n_conditions; i < sequence.size(); ++i) {
          if (sequence[i] != sequence[i - n_conditions]) {
            return fail("iteration " + std::to_string(iter) +
                        ": repetition altered a Latin row");
          }
        }
      }
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// 6. Golden transcripts: scripted sessions reproduce recorded streams
//    byte-for-byte, and leave exactly the recorded plan behind.

RunResult serve_script(const std::filesystem::path& plan_path,
                       const std::string& script) {
  SpawnOptions options;
  options.argv = {EXPTRIAL_BIN,  "serve",   "--plan", plan_path.string(),
                  "--participant", "1",     "--inputs", "1",
                  "--outputs",   "1"};
  return run_process(options, script);
}

std::string golden(const char* name) {
  return read_file(std::filesystem::path(GOLDEN_DIR) / name);
}

Outcome check_golden_transcripts() {
  // Scenario 1: a clean full session.
  {
    TempDir dir;
    const auto plan_path = dir.file("plan.csv");
    write_file(plan_path, golden("happy_plan.csv"));
    const RunResult run = serve_script(plan_path, golden("happy_script.jsonl"));
    if (run.exit_code != 0) return fail("clean session exited nonzero");
    if (run.out != golden("happy_expected.jsonl")) {
      return fail("clean session replies diverged");
    }
    if (read_file(plan_path) != golden("happy_final.csv")) {
      return fail("clean session left the wrong plan");
    }
  }

  // Scenario 2: kill the manager mid-session, then resume.
  {
    TempDir dir;
    const auto plan_path = dir.file("plan.csv");
    write_file(plan_path, golden("resume_plan.csv"));

    SpawnOptions options;
    options.argv = {EXPTRIAL_BIN,  "serve",   "--plan", plan_path.string(),
                    "--participant", "1",     "--inputs", "1",
                    "--outputs",   "1"};
    ChildProcess child(options);
    const auto requests = split_lines(golden("resume_script_a.jsonl"));
    const auto expected = split_lines(golden("resume_expected_a.jsonl"));
    for (std::size_t i = 0; i < requests.size(); ++i) {
      child.send_line(requests[i]);
      const auto reply = child.read_stdout_line();
      if (!reply || *reply != expected[i]) {
        child.kill_hard();
        child.wait();
        return fail("pre-kill reply " + std::to_string(i + 1) + " diverged");
      }
    }
    child.kill_hard();
    child.wait();
    if (!std::filesystem::exists(lock_path_for(plan_path))) {
      return fail("kill did not leave a stale lock");
    }

    const RunResult resume =
        serve_script(plan_path, golden("resume_script_b.jsonl"));
    if (resume.exit_code != 0) return fail("resume exited nonzero");
    if (resume.out != golden("resume_expected_b.jsonl")) {
      return fail("resume replies diverged");
    }
    if (read_file(plan_path) != golden("resume_final.csv")) {
      return fail("resume left the wrong plan");
    }
  }

  // Scenario 3: protocol abuse is answered, never fatal.
  {
    TempDir dir;
    const auto plan_path = dir.file("plan.csv");
    write_file(plan_path, golden("errors_plan.csv"));
    const RunResult run =
        serve_script(plan_path, golden("errors_script.jsonl"));
    if (run.exit_code != 0) return fail("error session exited nonzero");
    if (run.out != golden("errors_expected.jsonl")) {
      return fail("error session replies diverged");
    }
    if (read_file(plan_path) != golden("errors_final.csv")) {
      return fail("error session left the wrong plan");
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// 7. Rows filled before the session starts are never served.

Outcome check_prefilled_skipped() {
  TempDir dir;
  const auto plan_path = dir.file("plan.csv");
  write_file(plan_path, golden("skip_plan.csv"));
  const RunResult run = serve_script(plan_path, golden("skip_script.jsonl"));
  if (run.exit_code != 0) return fail("session exited nonzero");
  if (run.out != golden("skip_expected.jsonl")) {
    return fail("replies diverged from the recorded stream");
  }

  std::vector<std::uint64_t> served;
  for (const auto& line : split_lines(run.out)) {
    const auto pos = line.find("\"trial_number\":");
    if (pos == std::string::npos || line.find("\"TRIAL\"") ==
                                        std::string::npos) {
      continue;
    }
    served.push_back(std::strtoull(line.c_str() + pos + 15, nullptr, 10));
  }
  if (served != std::vector<std::uint64_t>{1, 3, 5}) {
    return fail("served trials were not exactly 1, 3, 5");
  }
  if (read_file(plan_path) != golden("skip_final.csv")) {
    return fail("prefilled values did not survive");
  }
  return {};
}

// ---------------------------------------------------------------------------
// 8. Generate → serve → export run twice gives identical data, with only
//    timestamps and session ids free to differ.

Outcome check_export_determinism() {
  const std::string spec_text =
      "factor side = left, right\n"
      "factor duration = 250, 500, 750\n"
      "repetitions = 1\n"
      "method = shuffle\n"
      "participants = 1..2\n"
      "outputs = response, rt_ms\n";
  const std::string script =
      R"({"type":"HELLO","protocol_version":1})" "\n"
      R"({"type":"GET_TRIAL"})" "\n"
      R"({"type":"PUT_RESULT","outputs":{"response":"yes","rt_ms":"404"}})"
      "\n"
      R"({"type":"GET_TRIAL"})" "\n"
      R"({"type":"PUT_RESULT","outputs":{"response":"no","rt_ms":"355"}})"
      "\n"
      R"({"type":"SKIP","reason":"hardware glitch"})" "\n"
      R"({"type":"BYE"})" "\n";

  auto pipeline = [&](const TempDir& dir) -> std::pair<std::string,
                                                       std::string> {
    const auto spec_path = dir.file("design.spec");
    write_file(spec_path, spec_text);
    const auto plan_path = dir.file("plan.csv");
    SpawnOptions gen;
    gen.argv = {EXPTRIAL_BIN, "generate",      "--spec", spec_path.string(),
                "--out",      plan_path.string(), "--seed", "42"};
    if (run_process(gen).exit_code != 0) return {"", ""};

    SpawnOptions serve;
    serve.argv = {EXPTRIAL_BIN,  "serve", "--plan", plan_path.string(),
                  "--participant", "1"};
    if (run_process(serve, script).exit_code != 0) return {"", ""};

    SpawnOptions exp;
    exp.argv = {EXPTRIAL_BIN, "export", "--plan", plan_path.string()};
    const RunResult out = run_process(exp);
    if (out.exit_code != 0) return {"", ""};
    return {read_file(plan_path), out.out};
  };

  TempDir dir_a, dir_b;
  const auto [plan_a, export_a] = pipeline(dir_a);
  const auto [plan_b, export_b] = pipeline(dir_b);
  if (export_a.empty() || export_b.empty()) {
    return fail("a pipeline stage exited nonzero");
  }
  if (plan_a != plan_b) return fail("generated plans differ across runs");

  const auto rows_a = csv::parse_records(export_a);
  const auto rows_b = csv::parse_records(export_b);
  if (rows_a.size() != rows_b.size() || rows_a.size() != 4) {
    return fail("export row counts differ or are wrong");
  }
  if (rows_a[0] != rows_b[0]) return fail("export headers differ");
  std::size_t ts_col = 0, sid_col = 0;
  for (std::size_t c = 0; c < rows_a[0].size(); ++c) {
    if (rows_a[0][c] == "timestamp") ts_col = c;
    if (rows_a[0][c] == "session_id") sid_col = c;
  }
  if (ts_col == 0 || sid_col == 0) return fail("export lacks audit columns");

  for (std::size_t r = 1; r < rows_a.size(); ++r) {
    for (std::size_t c = 0; c < rows_a[r].size(); ++c) {
      if (c == ts_col || c == sid_col) {
        if (rows_a[r][c].empty() || rows_b[r][c].empty()) {
          return fail("a recorded row lost its audit fields");
        }
        continue;
      }
      if (rows_a[r][c] != rows_b[r][c]) {
        return fail("row " + std::to_string(r) + " column " +
                    std::to_string(c) + " differs between runs");
      }
    }
  }

  // Exporting the same plan again is byte-stable.
  SpawnOptions again;
  again.argv = {EXPTRIAL_BIN, "export", "--plan",
                dir_a.file("plan.csv").string()};
  if (run_process(again).out != export_a) {
    return fail("re-export of the same session changed bytes");
  }
  return {};
}

}  // namespace

int main() {
  struct Check {
    const char* label;
    Outcome (*fn)();
  };
  const Check checks[] = {
      {"resume point matches brute-force replay on 1000 plans",
       check_resume_oracle},
      {"every fault-point kill recovers without re-serving journaled trials",
       check_crash_recovery},
      {"plan codec round-trips 10000 hostile plans, BOM included",
       check_codec_roundtrip},
      {"journal reads survive truncation at every byte offset",
       check_truncation_sweep},
      {"500 generated designs conserve condition multisets",
       check_generator_conservation},
      {"golden session transcripts reproduce byte-for-byte",
       check_golden_transcripts},
      {"prefilled trials 2 and 4 are skipped; serves exactly 1, 3, 5",
       check_prefilled_skipped},
      {"repeat generate/serve/export runs match modulo audit columns",
       check_export_determinism},
  };

  int failures = 0;
  int number = 0;
  for (const auto& check : checks) {
    ++number;
    Outcome outcome;
    try {
      outcome = check.fn();
    } catch (const std::exception& e) {
      outcome = fail(std::string("unhandled exception: ") + e.what());
    }
    if (outcome.ok) {
      std::printf("PASS  %d. %s\n", number, check.label);
    } else {
      std::printf("FAIL  %d. %s — %s\n", number, check.label,
                  outcome.detail.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  return failures;
}
