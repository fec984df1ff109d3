/*
 * Copyright 2026 The bevfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace bevfl {

// SplitMix64 finalizer. Used to derive independent seed streams.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a master seed and a path of tags, e.g.
// derive_seed(master, {kRoundStream, round, client}).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// Seeded generator with distribution helpers whose output is fully specified
// (std:: distributions are implementation-defined, the engine is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
  void shuffle(std::vector<std::size_t>& v);

 private:
  std::mt19937_64 engine_;
};

// Stream tags for derive_seed.
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamData = 2;
inline constexpr std::uint64_t kStreamSelect = 3;
inline constexpr std::uint64_t kStreamStraggler = 4;
inline constexpr std::uint64_t kStreamLocal = 5;
inline constexpr std::uint64_t kStreamSweep = 6;
inline constexpr std::uint64_t kStreamClientData = 7;

}  // namespace bevfl
