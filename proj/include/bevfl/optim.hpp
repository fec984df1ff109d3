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
#include <vector>

#include "bevfl/param_store.hpp"

namespace bevfl {

// Half-open flat index range [begin, end) into a ParamStore.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

std::vector<IndexRange> all_ranges(const ParamStore& store);

// values <- values - lr * grads over the given ranges (all ranges by default).
// Throws NonFiniteError, without touching values, if any gradient is not finite.
void sgd_step(ParamStore& params, double lr);
void sgd_step(ParamStore& params, double lr, const std::vector<IndexRange>& ranges);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Moments are kept per flat index and the
// bias-correction step count per segment, so two disjoint slices of one store
// can be stepped independently with different learning rates.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore& params, AdamWOptions options);

  void step(ParamStore& params, double lr);
  void step(ParamStore& params, double lr, const std::vector<IndexRange>& ranges);

  const AdamWOptions& options() const { return options_; }
  std::size_t step_count(std::size_t segment_index) const { return steps_.at(segment_index); }

 private:
  AdamWOptions options_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::vector<std::size_t> steps_;
};

}  // namespace bevfl
