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
#include <vector>

#include "bevfl/bev_grid.hpp"
#include "bevfl/tensor.hpp"

namespace bevfl {

struct IouCounts {
  std::size_t intersection = 0;
  std::size_t union_ = 0;

  IouCounts& operator+=(const IouCounts& o) {
    intersection += o.intersection;
    union_ += o.union_;
    return *this;
  }
  // Empty union counts as a perfect match.
  double value() const {
    return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_);
  }
};

// Vehicle-class counts over unmasked cells with prediction sigmoid(logit) >=
// threshold. Throws EmptySupportError if every cell is masked.
IouCounts iou_counts(const Tensor& logits, const BevGrid& gt, const BevGrid& mask,
                     double threshold = 0.5);
double iou(const Tensor& logits, const BevGrid& gt, const BevGrid& mask, double threshold = 0.5);
double iou(const BevGrid& pred, const BevGrid& gt, const BevGrid& mask);

// Rows index local testsets, columns personalized models.
struct CrossEvalMatrix {
  std::size_t n = 0;
  std::vector<double> entries;  // row-major n x n
  double at(std::size_t testset, std::size_t model) const { return entries[testset * n + model]; }
  // True if the diagonal entry of `row` is >= every entry in that row.
  bool diagonal_is_row_max(std::size_t row) const;
  std::size_t diagonal_row_max_count() const;
};

// Least-squares slope of log(series[t]) against log(t + 1) over t >= skip.
// Throws if the series is shorter than 20 or holds non-positive values.
double convergence_diagnostic(std::span<const double> series, std::size_t skip = 0);

// First 1-based round whose value reaches fraction * final value.
std::size_t rounds_to_target(std::span<const double> series, double fraction = 0.95);

}  // namespace bevfl
