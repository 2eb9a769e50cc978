// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// exptrial — deterministic trial plans and crash-safe experiment sessions.
//
// Exit codes (stable contract): 0 success, 2 validation/spec error,
// 3 I/O error, 4 lock conflict. Diagnostics go to stderr; reports and
// exported data go to stdout so they can be piped.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "exptrial/csv.hpp"
#include "exptrial/error.hpp"
#include "exptrial/export_csv.hpp"
#include "exptrial/generator.hpp"
#include "exptrial/persistence.hpp"
#include "exptrial/plan.hpp"
#include "exptrial/protocol.hpp"
#include "exptrial/session.hpp"
#include "exptrial/util.hpp"

namespace {

using namespace exptrial;

struct MetaCounts {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
};

void write_meta(const std::filesystem::path& plan_path, std::size_t inputs,
                std::size_t outputs, std::uint64_t seed,
                std::string_view method) {
  std::string content;
  content += "inputs=" + std::to_string(inputs) + "\n";
  content += "outputs=" + std::to_string(outputs) + "\n";
  content += "seed=" + std::to_string(seed) + "\n";
  content += "method=" + std::string(method) + "\n";
  atomic_rewrite(meta_path_for(plan_path), content);
}

std::optional<MetaCounts> read_meta(const std::filesystem::path& plan_path) {
  const auto path = meta_path_for(plan_path);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  const std::string bytes = read_file(path);
  std::optional<std::uint64_t> inputs, outputs;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto eol = bytes.find('\n', pos);
    if (eol == std::string::npos) eol = bytes.size();
    std::string_view line(bytes.data() + pos, eol - pos);
    pos = eol + 1;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string_view key = line.substr(0, eq);
    const std::string value(line.substr(eq + 1));
    if (key == "inputs") inputs = parse_u64(value);
    if (key == "outputs") outputs = parse_u64(value);
  }
  if (!inputs || !outputs) return std::nullopt;
  return MetaCounts{static_cast<std::size_t>(*inputs),
                    static_cast<std::size_t>(*outputs)};
}

/// Explicit flags win; the sidecar meta file fills in when they're absent.
MetaCounts resolve_counts(const std::filesystem::path& plan_path,
                          std::optional<std::uint64_t> inputs_flag,
                          std::optional<std::uint64_t> outputs_flag) {
  if (inputs_flag && outputs_flag) {
    return {static_cast<std::size_t>(*inputs_flag),
            static_cast<std::size_t>(*outputs_flag)};
  }
  auto meta = read_meta(plan_path);
  MetaCounts counts;
  if (inputs_flag) {
    counts.inputs = static_cast<std::size_t>(*inputs_flag);
  } else if (meta) {
    counts.inputs = meta->inputs;
  } else {
    throw Error(ErrorCode::PlanInvalid,
                "input column count unknown: pass --inputs or keep the "
                "plan's .meta file next to it");
  }
  if (outputs_flag) {
    counts.outputs = static_cast<std::size_t>(*outputs_flag);
  } else if (meta) {
    counts.outputs = meta->outputs;
  } else {
    throw Error(ErrorCode::PlanInvalid,
                "output column count unknown: pass --outputs or keep the "
                "plan's .meta file next to it");
  }
  return counts;
}

int cmd_generate(const std::string& spec_path, const std::string& out_path,
                 std::optional<std::uint64_t> seed_flag) {
  ParsedSpec parsed = parse_spec_text(read_file(spec_path));
  std::uint64_t seed;
  if (seed_flag) {
    seed = *seed_flag;
  } else if (parsed.seed_set) {
    seed = parsed.seed;
  } else {
    throw Error(ErrorCode::SpecInvalid,
                "no seed: set seed = ... in the spec file or pass --seed "
                "(plans must be reproducible)");
  }

  TrialPlan plan = generate_plan(parsed.spec, seed);
  atomic_rewrite(out_path, serialize_plan(plan));
  write_meta(out_path, plan.schema.input_count(), plan.schema.output_count(),
             seed, method_name(parsed.spec.method));

  std::cout << "wrote " << out_path << ": " << plan.rows.size()
            << " data rows, " << parsed.spec.participants.size()
            << " participants, seed " << seed << ", method "
            << method_name(parsed.spec.method) << "\n";
  return 0;
}

int cmd_validate(const std::string& plan_path,
                 std::optional<std::uint64_t> inputs_flag,
                 std::optional<std::uint64_t> outputs_flag) {
  const MetaCounts counts = resolve_counts(plan_path, inputs_flag,
                                           outputs_flag);
  TrialPlan plan = parse_plan(read_file(plan_path), counts.inputs,
                              counts.outputs);
  ValidationReport report = validate_plan(plan, counts.inputs,
                                          counts.outputs);
  std::cout << report.to_string();
  std::cout << report.error_count() << " errors, " << report.warning_count()
            << " warnings\n";
  return report.error_count() > 0 ? 2 : 0;
}

int cmd_status(const std::string& plan_path, std::uint64_t participant,
               std::optional<std::uint64_t> inputs_flag,
               std::optional<std::uint64_t> outputs_flag) {
  const MetaCounts counts = resolve_counts(plan_path, inputs_flag,
                                           outputs_flag);
  TrialPlan plan = parse_plan(read_file(plan_path), counts.inputs,
                              counts.outputs);
  ValidationReport report = validate_plan(plan, counts.inputs,
                                          counts.outputs);
  if (report.error_count() > 0) {
    throw Error(ErrorCode::PlanInvalid, report.to_string());
  }

  const auto rows = participant_rows(plan, participant);
  if (rows.empty()) {
    throw Error(ErrorCode::UnknownParticipant,
                "plan has no rows for participant " +
                    std::to_string(participant));
  }
  std::size_t completed = 0;
  for (const auto& row : rows) {
    if (row.record.complete()) ++completed;
  }
  std::cout << "participant " << participant << ": " << rows.size()
            << " trials, " << completed << " completed, "
            << rows.size() - completed << " remaining\n";
  const ResumePoint resume = find_resume_point(plan, participant);
  if (resume) {
    std::cout << "resume at trial " << resume->trial_number << "\n";
  } else {
    std::cout << "session complete\n";
  }
  return 0;
}

int cmd_recover(const std::string& plan_path,
                std::optional<std::uint64_t> inputs_flag,
                std::optional<std::uint64_t> outputs_flag) {
  const MetaCounts counts = resolve_counts(plan_path, inputs_flag,
                                           outputs_flag);
  auto [plan, report] = recover_plan(plan_path, journal_path_for(plan_path),
                                     counts.inputs, counts.outputs);
  (void)plan;

  if (report.restored.empty()) {
    std::cout << "0 restored\n";
  } else {
    std::cout << report.restored.size() << " restored ("
              << (report.restored.size() == 1 ? "trial" : "trials");
    for (std::size_t i = 0; i < report.restored.size(); ++i) {
      std::cout << (i ? ", " : " ") << report.restored[i].trial_number;
    }
    std::cout << ")\n";
  }
  for (const auto& orphan : report.orphans) {
    std::cout << "orphan journal entry: participant " << orphan.participant
              << " trial " << orphan.trial_number << " (seq " << orphan.seq
              << ")\n";
  }
  if (report.torn_tail) {
    std::cout << "torn trailing line detected and ignored\n";
  }
  return 0;
}

int cmd_export(const std::string& plan_path, const std::string& out_path,
               std::optional<std::uint64_t> inputs_flag,
               std::optional<std::uint64_t> outputs_flag) {
  const MetaCounts counts = resolve_counts(plan_path, inputs_flag,
                                           outputs_flag);
  TrialPlan plan = parse_plan(read_file(plan_path), counts.inputs,
                              counts.outputs);
  ValidationReport report = validate_plan(plan, counts.inputs,
                                          counts.outputs);
  if (report.error_count() > 0) {
    throw Error(ErrorCode::PlanInvalid, report.to_string());
  }
  const JournalContents journal =
      read_journal(journal_path_for(plan_path));
  const std::string bytes = export_results_csv(plan, journal);
  if (out_path.empty()) {
    std::cout << bytes;
  } else {
    atomic_rewrite(out_path, bytes);
    std::cerr << "wrote " << out_path << "\n";
  }
  return 0;
}

int cmd_serve(const std::string& plan_path, std::uint64_t participant,
              std::optional<std::uint64_t> inputs_flag,
              std::optional<std::uint64_t> outputs_flag,
              std::optional<std::uint64_t> start_from,
              const std::string& transport_name, std::uint16_t port) {
  const MetaCounts counts = resolve_counts(plan_path, inputs_flag,
                                           outputs_flag);
  SessionConfig config;
  config.plan_path = plan_path;
  config.participant = participant;
  config.input_count = counts.inputs;
  config.output_count = counts.outputs;
  config.start_from = start_from;

  if (transport_name == "socket") {
    SocketServer server(port);
    std::cerr << "listening on 127.0.0.1:" << server.port() << "\n";
    FdTransport transport = server.accept_one();
    return serve(config, transport, std::cerr);
  }
  FdTransport transport(0, 1, /*owns=*/false);
  return serve(config, transport, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "exptrial: deterministic trial plans, crash-safe sessions, and a "
      "line-oriented protocol for stimulus engines"};
  app.require_subcommand(1);

  std::string plan_path;
  std::string spec_path;
  std::string out_path;
  std::uint64_t participant = 0;
  std::optional<std::uint64_t> inputs_flag;
  std::optional<std::uint64_t> outputs_flag;
  std::optional<std::uint64_t> start_from;
  std::optional<std::uint64_t> seed_flag;
  std::string transport_name = "stdio";
  std::uint16_t port = 0;

  auto* generate = app.add_subcommand(
      "generate", "Generate a plan CSV from a design spec file");
  generate->add_option("--spec", spec_path, "design spec file")
      ->required()
      ->check(CLI::ExistingFile);
  generate->add_option("--out", out_path, "plan CSV to write")->required();
  generate->add_option("--seed", seed_flag,
                       "randomization seed (overrides the spec file's)");

  auto* validate = app.add_subcommand(
      "validate", "Check a plan CSV against the format rules");
  validate->add_option("--plan", plan_path, "plan CSV")->required();
  validate->add_option("--inputs", inputs_flag, "input column count");
  validate->add_option("--outputs", outputs_flag, "output column count");

  auto* status = app.add_subcommand(
      "status", "Report completion and the resume point for a participant");
  status->add_option("--plan", plan_path, "plan CSV")->required();
  status->add_option("--participant", participant, "participant id")
      ->required();
  status->add_option("--inputs", inputs_flag, "input column count");
  status->add_option("--outputs", outputs_flag, "output column count");

  auto* serve_cmd = app.add_subcommand(
      "serve", "Run a session, speaking the line protocol on the transport");
  serve_cmd->add_option("--plan", plan_path, "plan CSV")->required();
  serve_cmd->add_option("--participant", participant, "participant id")
      ->required();
  serve_cmd->add_option("--inputs", inputs_flag, "input column count");
  serve_cmd->add_option("--outputs", outputs_flag, "output column count");
  serve_cmd->add_option("--start-from", start_from,
                        "trial number to start at (overrides auto-resume)");
  serve_cmd
      ->add_option("--transport", transport_name,
                   "stdio (default) or socket")
      ->check(CLI::IsMember({"stdio", "socket"}));
  serve_cmd->add_option("--port", port,
                        "loopback port for --transport socket (0 = pick)");

  auto* recover = app.add_subcommand(
      "recover", "Replay the journal onto the plan after a crash");
  recover->add_option("--plan", plan_path, "plan CSV")->required();
  recover->add_option("--inputs", inputs_flag, "input column count");
  recover->add_option("--outputs", outputs_flag, "output column count");

  auto* export_cmd = app.add_subcommand(
      "export", "Write analysis-ready results (plan joined with journal)");
  export_cmd->add_option("--plan", plan_path, "plan CSV")->required();
  export_cmd->add_option("--out", out_path,
                         "output CSV (omit to write to stdout)");
  export_cmd->add_option("--inputs", inputs_flag, "input column count");
  export_cmd->add_option("--outputs", outputs_flag, "output column count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(spec_path, out_path, seed_flag);
    if (validate->parsed()) {
      return cmd_validate(plan_path, inputs_flag, outputs_flag);
    }
    if (status->parsed()) {
      return cmd_status(plan_path, participant, inputs_flag, outputs_flag);
    }
    if (serve_cmd->parsed()) {
      return cmd_serve(plan_path, participant, inputs_flag, outputs_flag,
                       start_from, transport_name, port);
    }
    if (recover->parsed()) {
      return cmd_recover(plan_path, inputs_flag, outputs_flag);
    }
    if (export_cmd->parsed()) {
      return cmd_export(plan_path, out_path, inputs_flag, outputs_flag);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::AlreadyLocked: return 4;
      case ErrorCode::StorageFailure: return 3;
      default: return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;  // unreachable: require_subcommand(1)
}
