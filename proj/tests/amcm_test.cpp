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
#include <numbers>

#include <gtest/gtest.h>

#include "bevfl/amcm.hpp"
#include "bevfl/errors.hpp"
#include "amcm_oracle.hpp"

namespace bevfl {
namespace {

using testing::random_rig;
using testing::wedge_oracle;

CameraRig single_camera(double yaw, double fov) {
  CameraRig rig;
  rig.rig_name = "custom";
  CameraPose c;
  c.height = 1.8;
  c.yaw = yaw;
  c.fov_azimuth = fov;
  rig.cameras.push_back(c);
  return rig;
}

std::size_t in_range_cells(std::size_t h, std::size_t w, double extent, double max_range) {
  std::size_t n = 0;
  const double ch = 2 * extent / static_cast<double>(h), cw = 2 * extent / static_cast<double>(w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      n += std::hypot(extent - ch * (r + 0.5), extent - cw * (c + 0.5)) <= max_range;
  return n;
}

TEST(WrapDeg, HalfOpenInterval) {
  EXPECT_EQ(wrap_deg(180.0), 180.0);
  EXPECT_EQ(wrap_deg(-180.0), 180.0);
  EXPECT_EQ(wrap_deg(190.0), -170.0);
  EXPECT_EQ(wrap_deg(-540.0), 180.0);
  EXPECT_EQ(wrap_deg(0.0), 0.0);
}

TEST(AmcmMask, FourPresetCamerasCoverEveryInRangeCell) {
  const auto m = amcm_mask(rig_from_preset("car"), 16, 16, 16.0);
  EXPECT_EQ(m, wedge_oracle(rig_from_preset("car"), 16, 16, 16.0, 16.0));
  EXPECT_EQ(m.count(), in_range_cells(16, 16, 16.0, 16.0));
}

TEST(AmcmMask, FrontCameraNinetyDegrees) {
  const auto rig = single_camera(0.0, 90.0);
  const auto m = amcm_mask(rig, 16, 16, 16.0);
  EXPECT_EQ(m, wedge_oracle(rig, 16, 16, 16.0, 16.0));
  // Diagonal cells sit exactly on the wedge edges: +45 is kept, -45 is not.
  const std::size_t r = 4, c_left = 4, c_right = 11;  // x = 7, y = +7 / -7
  EXPECT_EQ(m.at(r, c_left), 1);
  EXPECT_EQ(m.at(r, c_right), 0);
}

TEST(AmcmMask, FullCircleCameraCoversAllInRange) {
  const auto m = amcm_mask(single_camera(37.0, 360.0), 16, 16, 16.0);
  EXPECT_EQ(m.count(), in_range_cells(16, 16, 16.0, 16.0));
  EXPECT_EQ(amcm_mask(single_camera(0.0, 360.0), 16, 16, 16.0, 1e9).count(), 256u);
}

TEST(AmcmMask, EmptyRigThrows) {
  CameraRig rig;
  EXPECT_THROW(amcm_mask(rig, 16, 16, 16.0), ConfigError);
}

TEST(AmcmMask, RandomRigsMatchOracleExactly) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rig = random_rig(rng);
    const double max_range = rng.uniform(6.0, 24.0);
    const auto m = amcm_mask(rig, 16, 16, 16.0, max_range);
    EXPECT_EQ(m.count(), wedge_oracle(rig, 16, 16, 16.0, max_range).count()) << "trial " << trial;
    EXPECT_EQ(m, wedge_oracle(rig, 16, 16, 16.0, max_range));
  }
}

TEST(AmcmMask, SameShapeForEveryCameraCount) {
  const auto full = rig_from_preset("car");
  for (std::size_t n = 1; n <= 4; ++n) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 1; i <= n; ++i) idx.push_back(i);
    const auto m = amcm_mask(select_cameras(full, idx), 16, 16, 16.0);
    EXPECT_EQ(m.h(), 16u);
    EXPECT_EQ(m.w(), 16u);
  }
}

TEST(AmcmMask, AddingCamerasNeverDeactivates) {
  const auto full = rig_from_preset("truck");
  BevGrid prev(16, 16, 0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 1; i <= n; ++i) idx.push_back(i);
    const auto m = amcm_mask(select_cameras(full, idx), 16, 16, 16.0);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (prev[i]) EXPECT_EQ(m[i], 1);
    prev = m;
  }
}

TEST(ApplyMask, IdentityZeroAndCheckerboard) {
  Rng rng(1);
  Tensor rows({16, 3});
  for (auto& v : rows.vec()) v = rng.uniform(-1, 1) + 2.0;
  EXPECT_EQ(apply_mask(rows, BevGrid(4, 4, 1)), rows);
  const auto zeroed = apply_mask(rows, BevGrid(4, 4, 0));
  for (double v : zeroed.vec()) EXPECT_EQ(v, 0.0);
  BevGrid checker(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) checker.at(r, c) = (r + c) % 2;
  const auto out = apply_mask(rows, checker);
  std::size_t zero_rows = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    bool zero = true;
    for (std::size_t k = 0; k < 3; ++k) zero &= out.at(i, k) == 0.0;
    zero_rows += zero;
    if (checker[i]) {
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(out.at(i, k), rows.at(i, k));
    }
  }
  EXPECT_EQ(zero_rows, 8u);
}

TEST(ApplyMask, ShapeMismatchThrows) {
  EXPECT_THROW(apply_mask(Tensor({15, 3}), BevGrid(4, 4, 1)), DimensionError);
}

}  // namespace
}  // namespace bevfl
