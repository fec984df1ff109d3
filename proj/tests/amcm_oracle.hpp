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

#include <cmath>
#include <numbers>

#include "bevfl/bev_grid.hpp"
#include "bevfl/rng.hpp"
#include "bevfl/synth.hpp"

namespace bevfl::testing {

// Per-cell wedge-membership oracle written against the grid convention:
// row 0 forward, column 0 left, cell centers at half-cell offsets.
inline BevGrid wedge_oracle(const CameraRig& rig, std::size_t h, std::size_t w, double extent, double max_range) {
  BevGrid out(h, w, 0);
  const double ch = 2 * extent / static_cast<double>(h), cw = 2 * extent / static_cast<double>(w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double x = extent - ch * (static_cast<double>(r) + 0.5);
      const double y = extent - cw * (static_cast<double>(c) + 0.5);
      const double range = std::sqrt(x * x + y * y);
      if (range == 0.0) {
        out.at(r, c) = 1;
        continue;
      }
      if (range > max_range) continue;
      const double bearing = std::atan2(y, x) * 180.0 / std::numbers::pi;
      for (const auto& cam : rig.cameras) {
        const double half = cam.fov_azimuth / 2;
        double rel = bearing - cam.yaw;
        while (rel > 180.0) rel -= 360.0;
        while (rel <= -180.0) rel += 360.0;
        if (half >= 180.0 || (rel > -half && rel <= half)) {
          out.at(r, c) = 1;
          break;
        }
      }
    }
  }
  return out;
}

// One to four cameras at random yaws and fields of view.
inline CameraRig random_rig(Rng& rng) {
  CameraRig rig;
  rig.rig_name = "custom";
  const auto n = rng.uniform_int(1, 4);
  for (std::int64_t j = 0; j < n; ++j) {
    CameraPose c;
    c.yaw = rng.uniform(-180.0, 180.0);
    c.fov_azimuth = rng.uniform(20.0, 200.0);
    rig.cameras.push_back(c);
  }
  return rig;
}

}  // namespace bevfl::testing
