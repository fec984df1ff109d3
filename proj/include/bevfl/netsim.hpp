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
#include <optional>
#include <set>
#include <vector>

#include "bevfl/rng.hpp"

namespace bevfl {

struct NetworkProfile {
  double straggler_ratio = 0.0;  // in [0, 1)
  // false: fresh uniform draw each round. true: each client has a fixed
  // reliability rank drawn once; the least reliable selected clients straggle.
  bool persistent = false;
  // Clients that always upload (e.g. data silos on wired links).
  std::set<std::size_t> reliable_clients;
  // Stop after the round in which cumulative traffic reaches this many bits.
  std::optional<std::uint64_t> bits_budget;

  void validate() const;
};

struct StragglerDraw {
  std::vector<std::size_t> survivors;   // ascending
  std::vector<std::size_t> stragglers;  // ascending
};

// Drops floor(ratio * |selected|) clients, uniformly without replacement among
// clients not in `exempt` (capped by how many are eligible).
StragglerDraw sample_stragglers(const std::vector<std::size_t>& selected, double ratio, Rng& rng,
                                const std::set<std::size_t>& exempt = {});
// Persistent variant: drops the selected clients with the lowest reliability
// rank (rank[k] is client k's position in a fixed random order).
StragglerDraw rank_stragglers(const std::vector<std::size_t>& selected, double ratio,
                              const std::vector<std::size_t>& rank,
                              const std::set<std::size_t>& exempt = {});

struct LedgerEntry {
  std::size_t round = 0;
  std::size_t client = 0;
  std::uint64_t bits_up = 0;
  std::uint64_t bits_down = 0;
};

// Exact integer record of simulated traffic.
class CommLedger {
 public:
  void account(std::size_t round, std::size_t client, std::uint64_t bits_up, std::uint64_t bits_down);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::uint64_t total_up() const { return total_up_; }
  std::uint64_t total_down() const { return total_down_; }
  std::uint64_t total() const { return total_up_ + total_down_; }
  bool exhausted(const std::optional<std::uint64_t>& budget) const {
    return budget.has_value() && total() >= *budget;
  }

 private:
  std::vector<LedgerEntry> entries_;
  std::uint64_t total_up_ = 0;
  std::uint64_t total_down_ = 0;
};

inline constexpr std::uint64_t kValueBits = 64;
inline constexpr std::uint64_t kIndexBits = 32;

}  // namespace bevfl
