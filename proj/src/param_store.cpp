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
#include "bevfl/param_store.hpp"

#include <algorithm>

#include "bevfl/errors.hpp"

namespace bevfl {

std::size_t ParamStore::add_segment(std::string name, std::size_t length) {
  if (has_segment(name)) throw Error("param store: duplicate segment '" + name + "'");
  const std::size_t offset = values_.size();
  segments_.push_back({std::move(name), offset, length});
  values_.resize(offset + length, 0.0);
  grads_.resize(offset + length, 0.0);
  return offset;
}

const Segment& ParamStore::segment(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw Error("param store: no segment '" + std::string(name) + "'");
}

bool ParamStore::has_segment(std::string_view name) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [&](const Segment& s) { return s.name == name; });
}

std::span<double> ParamStore::values(std::string_view segment_name) {
  const auto& s = segment(segment_name);
  return std::span<double>(values_).subspan(s.offset, s.length);
}

std::span<const double> ParamStore::values(std::string_view segment_name) const {
  const auto& s = segment(segment_name);
  return std::span<const double>(values_).subspan(s.offset, s.length);
}

std::span<double> ParamStore::grads(std::string_view segment_name) {
  const auto& s = segment(segment_name);
  return std::span<double>(grads_).subspan(s.offset, s.length);
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

const std::string& ParamStore::segment_of(std::size_t i) const {
  for (const auto& s : segments_) {
    if (i >= s.offset && i < s.offset + s.length) return s.name;
  }
  throw Error("param store: index " + std::to_string(i) + " out of range");
}

}  // namespace bevfl
