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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bevfl {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

// Flat parameter vector partitioned into named, contiguous segments.
// Segments are appended in order, so they always tile [0, size()).
class ParamStore {
 public:
  ParamStore() = default;

  // Appends a segment of `length` zero-initialized values; returns its offset.
  std::size_t add_segment(std::string name, std::size_t length);

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::string_view name) const;
  bool has_segment(std::string_view name) const;

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }
  std::span<double> values(std::string_view segment_name);
  std::span<const double> values(std::string_view segment_name) const;
  std::span<double> grads(std::string_view segment_name);

  void zero_grad();
  // Name of the segment containing flat index i.
  const std::string& segment_of(std::size_t i) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<Segment> segments_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

}  // namespace bevfl
