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
#include "bevfl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bevfl/errors.hpp"

namespace bevfl {
namespace {

void check_finite(const ParamStore& params, const std::vector<IndexRange>& ranges) {
  const auto g = params.grads();
  for (const auto& r : ranges) {
    for (std::size_t i = r.begin; i < r.end; ++i) {
      if (!std::isfinite(g[i])) {
        throw NonFiniteError("optimizer: non-finite gradient at index " + std::to_string(i) +
                             " (segment '" + params.segment_of(i) + "')");
      }
    }
  }
}

void check_ranges(const ParamStore& params, const std::vector<IndexRange>& ranges) {
  for (const auto& r : ranges) {
    if (r.begin > r.end || r.end > params.size()) {
      throw DimensionError("optimizer: range [" + std::to_string(r.begin) + ", " +
                           std::to_string(r.end) + ") outside store of " +
                           std::to_string(params.size()));
    }
  }
}

}  // namespace

std::vector<IndexRange> all_ranges(const ParamStore& store) {
  return {IndexRange{0, store.size()}};
}

void sgd_step(ParamStore& params, double lr) { sgd_step(params, lr, all_ranges(params)); }

void sgd_step(ParamStore& params, double lr, const std::vector<IndexRange>& ranges) {
  check_ranges(params, ranges);
  check_finite(params, ranges);
  auto v = params.values();
  const auto g = params.grads();
  for (const auto& r : ranges)
    for (std::size_t i = r.begin; i < r.end; ++i) v[i] -= lr * g[i];
}

AdamW::AdamW(const ParamStore& params, AdamWOptions options)
    : options_(options),
      m_(params.size(), 0.0),
      v_(params.size(), 0.0),
      steps_(params.segments().size(), 0) {}

void AdamW::step(ParamStore& params, double lr) { step(params, lr, all_ranges(params)); }

void AdamW::step(ParamStore& params, double lr, const std::vector<IndexRange>& ranges) {
  if (m_.size() != params.size() || steps_.size() != params.segments().size()) {
    throw DimensionError("adamw: optimizer state does not match parameter store");
  }
  check_ranges(params, ranges);
  check_finite(params, ranges);

  // Segments touched by this step advance their bias-correction counter once.
  const auto& segs = params.segments();
  std::vector<bool> touched(segs.size(), false);
  for (const auto& r : ranges) {
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const std::size_t lo = segs[s].offset, hi = segs[s].offset + segs[s].length;
      if (r.begin < hi && lo < r.end) touched[s] = true;
    }
  }
  for (std::size_t s = 0; s < segs.size(); ++s)
    if (touched[s]) ++steps_[s];

  const auto [b1, b2, eps, wd] = options_;
  auto val = params.values();
  const auto g = params.grads();
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (!touched[s]) continue;
    const double t = static_cast<double>(steps_[s]);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    const std::size_t lo = segs[s].offset, hi = segs[s].offset + segs[s].length;
    for (const auto& r : ranges) {
      const std::size_t a = std::max(lo, r.begin), b = std::min(hi, r.end);
      for (std::size_t i = a; i < b; ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m_[i] / c1;
        const double vhat = v_[i] / c2;
        val[i] -= lr * wd * val[i];
        val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
}

}  // namespace bevfl
