// Copyright (c) 2026 exptrial contributors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic randomization primitives. Plans must be reproducible from a
// seed across machines, compilers, and reimplementations in other languages,
// so the generator, the bounded-draw procedure, and the shuffle are pinned
// exactly here and in docs/formats.md. Do not swap in std::mt19937 or
// std::shuffle; their outputs are not portable contracts.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace exptrial {

/// SplitMix64 (Steele, Lea & Flood; public-domain reference by Vigna).
/// State advances by the golden-gamma constant; output is the scrambled state.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += kGamma);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform draw in [0, n) for n >= 1, by masked rejection: take the
  /// smallest all-ones mask covering n-1, draw next() & mask, retry while
  /// the value is >= n. Unbiased and trivially portable.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    std::uint64_t v;
    do {
      v = next() & mask;
    } while (v >= n);
    return v;
  }

 private:
  std::uint64_t state_;
};

/// Generator for one named stream: SplitMix64 seeded with the
/// (stream_id + 1)-th output of SplitMix64(seed). Distinct stream ids give
/// decorrelated sequences from one experiment seed.
inline SplitMix64 stream_rng(std::uint64_t seed, std::uint64_t stream_id) {
  SplitMix64 base(seed + stream_id * SplitMix64::kGamma);
  return SplitMix64(base.next());
}

/// Fisher-Yates, backward form: for i = n-1 down to 1 swap items[i] with
/// items[j], j drawn by below(i + 1).
template <typename T>
void shuffle_in_place(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Copying shuffle on its own named stream.
template <typename T>
std::vector<T> seeded_shuffle(std::vector<T> items, std::uint64_t seed,
                              std::uint64_t stream_id) {
  SplitMix64 rng = stream_rng(seed, stream_id);
  shuffle_in_place(items, rng);
  return items;
}

}  // namespace exptrial
