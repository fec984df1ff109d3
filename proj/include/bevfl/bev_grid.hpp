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
#include <vector>

namespace bevfl {

// Binary h x w grid: ground-truth occupancy, binarized prediction, or query mask.
class BevGrid {
 public:
  BevGrid() = default;
  BevGrid(std::size_t h, std::size_t w, std::uint8_t fill = 0) : h_(h), w_(w), cells_(h * w, fill) {}

  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  std::size_t size() const { return cells_.size(); }

  std::uint8_t operator[](std::size_t i) const { return cells_[i]; }
  std::uint8_t& operator[](std::size_t i) { return cells_[i]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return cells_[r * w_ + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return cells_[r * w_ + c]; }

  const std::vector<std::uint8_t>& cells() const { return cells_; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto c : cells_) n += c != 0;
    return n;
  }

  friend bool operator==(const BevGrid&, const BevGrid&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<std::uint8_t> cells_;
};

}  // namespace bevfl
