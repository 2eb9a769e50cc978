// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Plan generation: expands a factorial design into per-participant trial
// lists, ordered by one of three methods. All randomness flows through
// stream_rng(seed, stream) so a (spec, seed) pair always yields the same
// plan, regardless of platform or participant evaluation order.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exptrial/plan.hpp"

namespace exptrial {

enum class Method { Shuffle, Blocked, LatinSquare };

std::string_view method_name(Method m);

/// One experimental factor: a name and its levels, in declaration order.
struct Factor {
  std::string name;
  std::vector<std::string> levels;
};

/// A complete generation request. `participants` keeps declaration order;
/// ordinal k (0-based) in this list seeds participant-specific streams and
/// selects the Latin square row.
struct DesignSpec {
  std::vector<Factor> factors;
  std::size_t repetitions = 1;
  std::vector<std::uint64_t> participants;
  std::vector<std::string> output_columns;
  Method method = Method::Shuffle;
};

/// Structural problems with a spec, empty when generate_plan would accept
/// it. Checks: at least one factor, unique non-empty factor names distinct
/// from the id columns, each factor has at least one level with no
/// duplicates, repetitions >= 1, at least one participant with no
/// duplicates, at least one output column, output names unique and disjoint
/// from factor and id names.
std::vector<std::string> spec_problems(const DesignSpec& spec);

/// Full factorial crossing in lexicographic order — the first factor varies
/// slowest — repeated `repetitions` times as whole-product copies. Each
/// element holds one level per factor, in factor order.
std::vector<std::vector<std::string>> factorial_expand(
    const std::vector<Factor>& factors, std::size_t repetitions);

/// Latin square of the given order: result[r][c] is a symbol in [0, order).
/// Every symbol appears exactly once per row and per column. Built from the
/// cyclic square (r + c) mod order with seeded row and symbol permutations.
std::vector<std::vector<std::size_t>> latin_square(std::size_t order,
                                                   std::uint64_t seed);

/// Deterministic plan for (spec, seed). Trials are numbered 1..n within each
/// participant; all output cells start absent. Throws SPEC_INVALID when
/// spec_problems is non-empty.
TrialPlan generate_plan(const DesignSpec& spec, std::uint64_t seed);

/// A spec parsed from text, plus whether it carried its own seed.
struct ParsedSpec {
  DesignSpec spec;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

/// Parses the key = value spec format described in docs/formats.md.
/// Throws SPEC_INVALID on unknown keys, duplicate keys, or bad values.
ParsedSpec parse_spec_text(std::string_view text);

}  // namespace exptrial
