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
#include <cmath>

#include <gtest/gtest.h>

#include "bevfl/errors.hpp"
#include "bevfl/metrics.hpp"
#include "bevfl/rng.hpp"

namespace bevfl {
namespace {

BevGrid grid_from(std::initializer_list<int> cells, std::size_t h = 4, std::size_t w = 4) {
  BevGrid g(h, w);
  std::size_t i = 0;
  for (int c : cells) g[i++] = static_cast<std::uint8_t>(c);
  return g;
}

Tensor logits_for(const BevGrid& pred) {
  Tensor t({pred.size(), 1});
  for (std::size_t i = 0; i < pred.size(); ++i) t[i] = pred[i] ? 3.0 : -3.0;
  return t;
}

TEST(Iou, PerfectAndDisjoint) {
  const BevGrid all(4, 4, 1);
  const auto gt = grid_from({1, 1, 0, 0, 1});
  EXPECT_EQ(iou(gt, gt, all), 1.0);
  EXPECT_EQ(iou(logits_for(gt), gt, all), 1.0);
  const auto other = grid_from({0, 0, 1, 1});
  EXPECT_EQ(iou(other, gt, all), 0.0);
}

TEST(Iou, HalfCoverageCountingOracle) {
  const BevGrid all(4, 4, 1);
  const auto gt = grid_from({1, 1, 1, 1});
  const auto pred = grid_from({1, 1, 0, 0});
  EXPECT_EQ(iou(pred, gt, all), 0.5);
  EXPECT_EQ(iou(logits_for(pred), gt, all), 0.5);
}

TEST(Iou, EmptyUnionIsOneAndAllMaskedThrows) {
  const BevGrid empty(4, 4, 0), all(4, 4, 1);
  EXPECT_EQ(iou(empty, empty, all), 1.0);
  EXPECT_THROW(iou(empty, empty, empty), EmptySupportError);
  EXPECT_THROW(iou(logits_for(empty), empty, empty), EmptySupportError);
  EXPECT_THROW(iou(Tensor({15, 1}), empty, all), DimensionError);
}

TEST(Iou, ThresholdAppliesToSigmoid) {
  const BevGrid all(4, 4, 1);
  const auto gt = grid_from({1});
  Tensor z({16, 1}, -5.0);
  z[0] = 0.0;  // sigmoid = 0.5 exactly
  EXPECT_EQ(iou(z, gt, all, 0.5), 1.0);
  z[0] = -1e-9;
  EXPECT_EQ(iou(z, gt, all, 0.5), 0.0);
  z[0] = std::log(0.7 / 0.3) + 1e-9;
  EXPECT_EQ(iou(z, gt, all, 0.7), 1.0);
}

TEST(Iou, SymmetricBoundedAndMaskAware) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    BevGrid a(4, 4), b(4, 4), m(4, 4);
    for (std::size_t i = 0; i < 16; ++i) {
      a[i] = rng.uniform() < 0.3;
      b[i] = rng.uniform() < 0.3;
      m[i] = rng.uniform() < 0.8;
    }
    m[0] = 1;
    const double ab = iou(a, b, m);
    EXPECT_EQ(ab, iou(b, a, m));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      if (!m[i]) continue;
      inter += a[i] && b[i];
      uni += a[i] || b[i];
    }
    EXPECT_EQ(ab, uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0);
  }
}

TEST(IouCounts, PoolsAcrossSamples) {
  IouCounts c{1, 4};
  c += IouCounts{3, 4};
  EXPECT_EQ(c.value(), 0.5);
}

TEST(CrossEval, DiagonalRowMaximum) {
  CrossEvalMatrix m{3, {0.5, 0.2, 0.1, 0.3, 0.2, 0.4, 0.0, 0.1, 0.6}};
  EXPECT_TRUE(m.diagonal_is_row_max(0));
  EXPECT_FALSE(m.diagonal_is_row_max(1));
  EXPECT_TRUE(m.diagonal_is_row_max(2));
  EXPECT_EQ(m.diagonal_row_max_count(), 2u);
  EXPECT_EQ(m.at(1, 2), 0.4);
}

TEST(Convergence, RecoversPowerLawExponent) {
  std::vector<double> s;
  for (int t = 1; t <= 60; ++t) s.push_back(3.0 / std::sqrt(static_cast<double>(t)));
  EXPECT_NEAR(convergence_diagnostic(s), -0.5, 1e-6);
  EXPECT_NEAR(convergence_diagnostic(s, 20), -0.5, 1e-6);
  std::vector<double> p;
  for (int t = 1; t <= 40; ++t) p.push_back(std::pow(static_cast<double>(t), -1.3));
  EXPECT_NEAR(convergence_diagnostic(p), -1.3, 1e-6);
  EXPECT_NEAR(convergence_diagnostic(std::vector<double>(25, 2.0)), 0.0, 1e-12);
}

TEST(Convergence, RejectsShortOrNonPositive) {
  EXPECT_THROW(convergence_diagnostic(std::vector<double>(19, 1.0)), ConfigError);
  std::vector<double> s(25, 1.0);
  s[3] = 0.0;
  EXPECT_THROW(convergence_diagnostic(s), ConfigError);
}

TEST(RoundsToTarget, ScanOracle) {
  const std::vector<double> monotone = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  EXPECT_LE(rounds_to_target(monotone), 10u);
  EXPECT_EQ(rounds_to_target(std::vector<double>(7, 0.3)), 1u);
  // 0.95 * 0.30 = 0.285 is first reached by the final value.
  EXPECT_EQ(rounds_to_target(std::vector<double>{0.1, 0.2, 0.28, 0.30}), 4u);
  EXPECT_EQ(rounds_to_target(std::vector<double>{0.1, 0.2, 0.29, 0.30}), 3u);
  EXPECT_THROW(rounds_to_target(std::vector<double>{}), ConfigError);
}

}  // namespace
}  // namespace bevfl
