// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Crash-injection hooks for durability testing. Setting
// EXPTRIAL_CRASH_AT=point[:k] makes the k-th pass (default first) through
// that named point SIGKILL the process — no cleanup, no atexit, exactly the
// power-loss the storage layer must survive. Compiled in unconditionally:
// the hit path is two branches when the variable is unset, and shipping the
// same binary we test is the point.
//
// Points wired today: record.before_journal, record.after_journal,
// rewrite.mid_temp, rewrite.before_rename, record.after_rewrite.

#pragma once

namespace exptrial::faults {

void maybe_crash(const char* point);

}  // namespace exptrial::faults
