// Copyright (c) 2026, the oodkit authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace oodkit {

/// splitmix64 finalizer. The constants are frozen: derived seeds are part
/// of every serialized artifact's reproducibility contract.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from (master, purpose[, index]).
/// All randomness in the toolkit flows from one master seed through here.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(master ^ fnv1a64(purpose)) + index);
}

/// Deterministic random generator. Bounded/real/normal draws are
/// implemented here instead of std::*_distribution so identical seeds
/// produce identical streams on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  static Rng derived(std::uint64_t master, std::string_view purpose,
                     std::uint64_t index = 0) {
    return Rng(derive_seed(master, purpose, index));
  }

  std::uint64_t next_u64() {
    ++draws_;
    return eng_();
  }

  /// Unbiased draw in [0, bound).
  std::uint64_t uniform_u64(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_u64: bound must be > 0");
    const std::uint64_t lim = (0 - bound) % bound;  // 2^64 mod bound
    std::uint64_t r = next_u64();
    while (r < lim) r = next_u64();
    return r % bound;
  }

  /// Inclusive integer range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span =
        static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    if (span == 0) {  // full 64-bit range
      return static_cast<std::int64_t>(next_u64());
    }
    return lo + static_cast<std::int64_t>(uniform_u64(span));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 6.283185307179586476925286766559 * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
  }

  /// Number of raw 64-bit draws consumed so far.
  std::uint64_t draw_count() const { return draws_; }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_u64(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  std::uint64_t draws_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace oodkit
