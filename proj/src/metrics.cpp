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
#include "bevfl/metrics.hpp"

#include <cmath>
#include <string>

#include "bevfl/errors.hpp"

namespace bevfl {

IouCounts iou_counts(const Tensor& logits, const BevGrid& gt, const BevGrid& mask, double threshold) {
  if (logits.size() != gt.size() || gt.size() != mask.size() || gt.h() != mask.h()) {
    throw DimensionError("iou: logits " + shape_str(logits.shape()) + " vs grid " +
                         std::to_string(gt.h()) + "x" + std::to_string(gt.w()));
  }
  if (mask.count() == 0) throw EmptySupportError("iou: every cell is masked");
  // sigmoid(z) >= t  <=>  z >= logit(t)
  const double cut = std::log(threshold / (1.0 - threshold));
  IouCounts c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const bool p = logits[i] >= cut;
    const bool y = gt[i] != 0;
    c.intersection += p && y;
    c.union_ += p || y;
  }
  return c;
}

double iou(const Tensor& logits, const BevGrid& gt, const BevGrid& mask, double threshold) {
  return iou_counts(logits, gt, mask, threshold).value();
}

double iou(const BevGrid& pred, const BevGrid& gt, const BevGrid& mask) {
  if (pred.size() != gt.size() || gt.size() != mask.size()) throw DimensionError("iou: grid shapes differ");
  if (mask.count() == 0) throw EmptySupportError("iou: every cell is masked");
  IouCounts c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    c.intersection += pred[i] && gt[i];
    c.union_ += pred[i] || gt[i];
  }
  return c.value();
}

bool CrossEvalMatrix::diagonal_is_row_max(std::size_t row) const {
  for (std::size_t j = 0; j < n; ++j)
    if (at(row, j) > at(row, row)) return false;
  return true;
}

std::size_t CrossEvalMatrix::diagonal_row_max_count() const {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) c += diagonal_is_row_max(i);
  return c;
}

double convergence_diagnostic(std::span<const double> series, std::size_t skip) {
  if (series.size() < 20) throw ConfigError("convergence_diagnostic: need at least 20 points");
  if (skip + 2 > series.size()) throw ConfigError("convergence_diagnostic: window too short");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(series.size() - skip);
  for (std::size_t t = skip; t < series.size(); ++t) {
    if (!(series[t] > 0.0)) {
      throw ConfigError("convergence_diagnostic: non-positive value at index " + std::to_string(t));
    }
    const double x = std::log(static_cast<double>(t + 1));
    const double y = std::log(series[t]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::size_t rounds_to_target(std::span<const double> series, double fraction) {
  if (series.empty()) throw ConfigError("rounds_to_target: empty series");
  const double target = fraction * series.back();
  for (std::size_t t = 0; t < series.size(); ++t)
    if (series[t] >= target) return t + 1;
  return series.size();
}

}  // namespace bevfl
