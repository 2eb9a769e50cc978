// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0

#include "exptrial/generator.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "exptrial/error.hpp"
#include "exptrial/rng.hpp"
#include "exptrial/util.hpp"

namespace exptrial {

namespace {

// Stream-id allocation (documented in docs/formats.md):
//   shuffle        participant ordinal k
//   blocked        k * 2^32 + block index
//   latin_square   two fixed streams below, shared by all participants
constexpr std::uint64_t kStreamLatinRows = 0x8000000000000000ULL;
constexpr std::uint64_t kStreamLatinSymbols = 0x8000000000000001ULL;

constexpr std::uint64_t kBlockStreamStride = 1ULL << 32;

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Shuffle: return "shuffle";
    case Method::Blocked: return "blocked";
    case Method::LatinSquare: return "latin_square";
  }
  return "?";
}

std::vector<std::string> spec_problems(const DesignSpec& spec) {
  std::vector<std::string> problems;
  if (spec.factors.empty()) problems.push_back("no factors declared");

  std::set<std::string> names;
  for (const auto& factor : spec.factors) {
    if (factor.name.empty()) problems.push_back("factor with empty name");
    if (factor.name == kParticipantColumn || factor.name == kTrialColumn) {
      problems.push_back("factor name \"" + factor.name +
                         "\" collides with an id column");
    }
    if (!names.insert(factor.name).second) {
      problems.push_back("duplicate factor name \"" + factor.name + "\"");
    }
    if (factor.levels.empty()) {
      problems.push_back("factor \"" + factor.name + "\" has no levels");
    }
    std::set<std::string> levels;
    for (const auto& level : factor.levels) {
      if (!levels.insert(level).second) {
        problems.push_back("factor \"" + factor.name +
                           "\" has duplicate level \"" + level + "\"");
      }
    }
  }

  if (spec.repetitions < 1) problems.push_back("repetitions must be >= 1");

  if (spec.participants.empty()) {
    problems.push_back("no participants declared");
  }
  std::set<std::uint64_t> ids(spec.participants.begin(),
                              spec.participants.end());
  if (ids.size() != spec.participants.size()) {
    problems.push_back("duplicate participant id");
  }

  if (spec.output_columns.empty()) {
    problems.push_back("no output columns declared");
  }
  std::set<std::string> outputs;
  for (const auto& name : spec.output_columns) {
    if (name.empty()) problems.push_back("output column with empty name");
    if (!outputs.insert(name).second) {
      problems.push_back("duplicate output column \"" + name + "\"");
    }
    if (names.count(name)) {
      problems.push_back("output column \"" + name +
                         "\" collides with a factor name");
    }
    if (name == kParticipantColumn || name == kTrialColumn) {
      problems.push_back("output column \"" + name +
                         "\" collides with an id column");
    }
  }
  return problems;
}

std::vector<std::vector<std::string>> factorial_expand(
    const std::vector<Factor>& factors, std::size_t repetitions) {
  std::size_t product = 1;
  for (const auto& factor : factors) product *= factor.levels.size();

  std::vector<std::vector<std::string>> once;
  once.reserve(product);
  std::vector<std::size_t> counter(factors.size(), 0);
  for (std::size_t t = 0; t < product; ++t) {
    std::vector<std::string> tuple;
    tuple.reserve(factors.size());
    for (std::size_t f = 0; f < factors.size(); ++f) {
      tuple.push_back(factors[f].levels[counter[f]]);
    }
    once.push_back(std::move(tuple));
    // Odometer increment, last factor fastest.
    for (std::size_t f = factors.size(); f-- > 0;) {
      if (++counter[f] < factors[f].levels.size()) break;
      counter[f] = 0;
    }
  }

  std::vector<std::vector<std::string>> result;
  result.reserve(product * repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    result.insert(result.end(), once.begin(), once.end());
  }
  return result;
}

std::vector<std::vector<std::size_t>> latin_square(std::size_t order,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> row_perm(order);
  std::iota(row_perm.begin(), row_perm.end(), std::size_t{0});
  std::vector<std::size_t> sym_perm = row_perm;
  {
    SplitMix64 rows_rng = stream_rng(seed, kStreamLatinRows);
    shuffle_in_place(row_perm, rows_rng);
    SplitMix64 syms_rng = stream_rng(seed, kStreamLatinSymbols);
    shuffle_in_place(sym_perm, syms_rng);
  }
  std::vector<std::vector<std::size_t>> square(
      order, std::vector<std::size_t>(order));
  for (std::size_t r = 0; r < order; ++r) {
    for (std::size_t c = 0; c < order; ++c) {
      square[r][c] = sym_perm[(row_perm[r] + c) % order];
    }
  }
  return square;
}

TrialPlan generate_plan(const DesignSpec& spec, std::uint64_t seed) {
  auto problems = spec_problems(spec);
  if (!problems.empty()) {
    std::ostringstream joined;
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) joined << "; ";
      joined << problems[i];
    }
    throw Error(ErrorCode::SpecInvalid, joined.str());
  }

  const auto conditions = factorial_expand(spec.factors, 1);
  const std::size_t block = conditions.size();

  TrialPlan plan;
  for (const auto& factor : spec.factors) {
    plan.schema.input_columns.push_back(factor.name);
  }
  plan.schema.output_columns = spec.output_columns;

  std::vector<std::vector<std::size_t>> square;
  if (spec.method == Method::LatinSquare) square = latin_square(block, seed);

  for (std::size_t k = 0; k < spec.participants.size(); ++k) {
    std::vector<std::vector<std::string>> ordered;
    switch (spec.method) {
      case Method::Shuffle:
        ordered = seeded_shuffle(
            factorial_expand(spec.factors, spec.repetitions), seed, k);
        break;
      case Method::Blocked:
        ordered.reserve(block * spec.repetitions);
        for (std::size_t b = 0; b < spec.repetitions; ++b) {
          auto shuffled =
              seeded_shuffle(conditions, seed, k * kBlockStreamStride + b);
          for (auto& tuple : shuffled) ordered.push_back(std::move(tuple));
        }
        break;
      case Method::LatinSquare: {
        const auto& row = square[k % block];
        ordered.reserve(block * spec.repetitions);
        for (std::size_t r = 0; r < spec.repetitions; ++r) {
          for (std::size_t idx : row) ordered.push_back(conditions[idx]);
        }
        break;
      }
    }
    for (std::size_t t = 0; t < ordered.size(); ++t) {
      TrialRecord row;
      row.participant = spec.participants[k];
      row.trial_number = t + 1;
      row.inputs = std::move(ordered[t]);
      row.outputs.assign(spec.output_columns.size(), std::nullopt);
      plan.rows.push_back(std::move(row));
    }
  }
  return plan;
}

namespace {

// Tokenizes a spec value: tokens split on whitespace and commas, with
// double-quoted tokens (doubled quote escapes) for values containing either.
std::vector<std::string> tokenize_value(std::string_view text,
                                        std::size_t line_number) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == ',') {
      ++i;
      continue;
    }
    std::string token;
    if (c == '"') {
      ++i;
      bool closed = false;
      while (i < n) {
        if (text[i] == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            token.push_back('"');
            i += 2;
          } else {
            ++i;
            closed = true;
            break;
          }
        } else {
          token.push_back(text[i]);
          ++i;
        }
      }
      if (!closed) {
        throw Error(ErrorCode::SpecInvalid,
                    "unterminated quote on line " +
                        std::to_string(line_number));
      }
      tokens.push_back(std::move(token));
      continue;
    }
    while (i < n && text[i] != ' ' && text[i] != '\t' && text[i] != ',') {
      if (text[i] == '"') {
        throw Error(ErrorCode::SpecInvalid,
                    "stray quote on line " + std::to_string(line_number));
      }
      token.push_back(text[i]);
      ++i;
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

std::uint64_t require_u64(const std::string& token, std::string_view key,
                          std::size_t line_number) {
  auto value = parse_u64(token);
  if (!value) {
    throw Error(ErrorCode::SpecInvalid,
                std::string(key) + " value \"" + token + "\" on line " +
                    std::to_string(line_number) +
                    " is not a non-negative integer");
  }
  return *value;
}

// Expands "participants = 1..12" style ranges; plain ids pass through.
std::vector<std::uint64_t> parse_participants(
    const std::vector<std::string>& tokens, std::size_t line_number) {
  std::vector<std::uint64_t> ids;
  for (const auto& token : tokens) {
    const auto dots = token.find("..");
    if (dots != std::string::npos) {
      const auto lo = require_u64(token.substr(0, dots), "participants",
                                  line_number);
      const auto hi = require_u64(token.substr(dots + 2), "participants",
                                  line_number);
      if (hi < lo) {
        throw Error(ErrorCode::SpecInvalid,
                    "descending participant range \"" + token +
                        "\" on line " + std::to_string(line_number));
      }
      if (hi - lo >= 100000) {
        throw Error(ErrorCode::SpecInvalid,
                    "participant range \"" + token + "\" on line " +
                        std::to_string(line_number) + " is implausibly large");
      }
      for (std::uint64_t id = lo; id <= hi; ++id) ids.push_back(id);
    } else {
      ids.push_back(require_u64(token, "participants", line_number));
    }
  }
  return ids;
}

}  // namespace

ParsedSpec parse_spec_text(std::string_view text) {
  ParsedSpec parsed;
  DesignSpec& spec = parsed.spec;
  std::set<std::string> seen_keys;

  std::size_t line_number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? std::string_view::npos
                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_number;

    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    if (is_blank(line)) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::SpecInvalid,
                  "line " + std::to_string(line_number) +
                      " is not a key = value entry");
    }
    std::string_view key_part = line.substr(0, eq);
    std::string_view value_part = line.substr(eq + 1);
    while (!key_part.empty() && (key_part.back() == ' ' ||
                                 key_part.back() == '\t')) {
      key_part.remove_suffix(1);
    }
    while (!key_part.empty() && (key_part.front() == ' ' ||
                                 key_part.front() == '\t')) {
      key_part.remove_prefix(1);
    }

    // "factor <name>" is the only compound key; everything else is a word.
    std::string key(key_part);
    std::string factor_name;
    if (key.rfind("factor ", 0) == 0 || key.rfind("factor\t", 0) == 0) {
      factor_name = key.substr(7);
      while (!factor_name.empty() && (factor_name.front() == ' ' ||
                                      factor_name.front() == '\t')) {
        factor_name.erase(factor_name.begin());
      }
      key = "factor";
      if (factor_name.empty()) {
        throw Error(ErrorCode::SpecInvalid,
                    "factor with no name on line " +
                        std::to_string(line_number));
      }
    }

    const std::string dedup_key =
        key == "factor" ? "factor " + factor_name : key;
    if (!seen_keys.insert(dedup_key).second) {
      throw Error(ErrorCode::SpecInvalid,
                  "duplicate key \"" + dedup_key + "\" on line " +
                      std::to_string(line_number));
    }

    auto tokens = tokenize_value(value_part, line_number);
    if (tokens.empty()) {
      throw Error(ErrorCode::SpecInvalid,
                  "key \"" + dedup_key + "\" on line " +
                      std::to_string(line_number) + " has no value");
    }

    if (key == "factor") {
      spec.factors.push_back({factor_name, std::move(tokens)});
    } else if (key == "participants") {
      spec.participants = parse_participants(tokens, line_number);
    } else if (key == "outputs") {
      spec.output_columns = std::move(tokens);
    } else if (key == "repetitions") {
      if (tokens.size() != 1) {
        throw Error(ErrorCode::SpecInvalid,
                    "repetitions takes one value (line " +
                        std::to_string(line_number) + ")");
      }
      spec.repetitions = static_cast<std::size_t>(
          require_u64(tokens[0], "repetitions", line_number));
    } else if (key == "method") {
      if (tokens.size() != 1) {
        throw Error(ErrorCode::SpecInvalid,
                    "method takes one value (line " +
                        std::to_string(line_number) + ")");
      }
      if (tokens[0] == "shuffle") {
        spec.method = Method::Shuffle;
      } else if (tokens[0] == "blocked") {
        spec.method = Method::Blocked;
      } else if (tokens[0] == "latin_square") {
        spec.method = Method::LatinSquare;
      } else {
        throw Error(ErrorCode::SpecInvalid,
                    "unknown method \"" + tokens[0] + "\" on line " +
                        std::to_string(line_number));
      }
    } else if (key == "seed") {
      if (tokens.size() != 1) {
        throw Error(ErrorCode::SpecInvalid,
                    "seed takes one value (line " +
                        std::to_string(line_number) + ")");
      }
      parsed.seed = require_u64(tokens[0], "seed", line_number);
      parsed.seed_set = true;
    } else {
      throw Error(ErrorCode::SpecInvalid,
                  "unknown key \"" + key + "\" on line " +
                      std::to_string(line_number));
    }
  }

  return parsed;
}

}  // namespace exptrial
