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
#include "bevfl/netsim.hpp"

#include <algorithm>
#include <cmath>

#include "bevfl/errors.hpp"

namespace bevfl {
namespace {

std::size_t drop_count(std::size_t n, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("straggler ratio must be in [0, 1)");
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
}

StragglerDraw finish(const std::vector<std::size_t>& selected, std::vector<std::size_t> dropped) {
  StragglerDraw d;
  std::sort(dropped.begin(), dropped.end());
  d.stragglers = dropped;
  for (std::size_t k : selected)
    if (!std::binary_search(dropped.begin(), dropped.end(), k)) d.survivors.push_back(k);
  std::sort(d.survivors.begin(), d.survivors.end());
  return d;
}

}  // namespace

void NetworkProfile::validate() const {
  if (!(straggler_ratio >= 0.0 && straggler_ratio < 1.0)) {
    throw ConfigError("network: straggler_ratio must be in [0, 1)");
  }
}

StragglerDraw sample_stragglers(const std::vector<std::size_t>& selected, double ratio, Rng& rng,
                                const std::set<std::size_t>& exempt) {
  std::vector<std::size_t> eligible;
  for (std::size_t k : selected)
    if (!exempt.count(k)) eligible.push_back(k);
  const std::size_t n_drop = std::min(drop_count(selected.size(), ratio), eligible.size());
  std::vector<std::size_t> dropped;
  for (std::size_t i : rng.sample_without_replacement(eligible.size(), n_drop)) {
    dropped.push_back(eligible[i]);
  }
  return finish(selected, std::move(dropped));
}

StragglerDraw rank_stragglers(const std::vector<std::size_t>& selected, double ratio,
                              const std::vector<std::size_t>& rank,
                              const std::set<std::size_t>& exempt) {
  std::vector<std::size_t> eligible;
  for (std::size_t k : selected)
    if (!exempt.count(k)) eligible.push_back(k);
  const std::size_t n_drop = std::min(drop_count(selected.size(), ratio), eligible.size());
  std::sort(eligible.begin(), eligible.end(),
            [&](std::size_t a, std::size_t b) { return rank.at(a) < rank.at(b); });
  return finish(selected, std::vector<std::size_t>(eligible.begin(), eligible.begin() + n_drop));
}

void CommLedger::account(std::size_t round, std::size_t client, std::uint64_t bits_up,
                         std::uint64_t bits_down) {
  if (bits_up == 0 && bits_down == 0) return;
  entries_.push_back({round, client, bits_up, bits_down});
  total_up_ += bits_up;
  total_down_ += bits_down;
}

}  // namespace bevfl
