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
#include "bevfl/amcm.hpp"

#include <cmath>
#include <numbers>

#include "bevfl/errors.hpp"

namespace bevfl {

double wrap_deg(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

bool FovWedge::contains(double bearing_deg, double range) const {
  if (range > max_range) return false;
  if (half_angle >= 180.0) return true;
  const double rel = wrap_deg(bearing_deg - yaw_center);
  return rel > -half_angle && rel <= half_angle;
}

std::vector<FovWedge> fov_wedges(const CameraRig& rig, double max_range) {
  std::vector<FovWedge> out;
  for (const auto& c : rig.cameras) out.push_back({c.yaw, c.fov_azimuth / 2.0, max_range});
  return out;
}

BevGrid amcm_mask(const CameraRig& rig, std::size_t h, std::size_t w, double extent,
                  std::optional<double> max_range) {
  if (rig.cameras.empty()) throw ConfigError("amcm_mask: rig has no cameras");
  const auto wedges = fov_wedges(rig, max_range.value_or(extent));
  BevGrid mask(h, w, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const auto [x, y] = bev_cell_center(r, c, h, w, extent);
      const double range = std::hypot(x, y);
      if (range == 0.0) {
        mask.at(r, c) = 1;
        continue;
      }
      const double bearing = std::atan2(y, x) * 180.0 / std::numbers::pi;
      for (const auto& wd : wedges) {
        if (wd.contains(bearing, range)) {
          mask.at(r, c) = 1;
          break;
        }
      }
    }
  }
  return mask;
}

Tensor apply_mask(const Tensor& rows, const BevGrid& mask) {
  const std::size_t cells = mask.size();
  if (cells == 0 || rows.size() % cells != 0 || rows.shape().empty() ||
      (rows.rank() == 2 && rows.shape()[0] != cells) ||
      (rows.rank() == 3 && (rows.shape()[0] != mask.h() || rows.shape()[1] != mask.w()))) {
    throw DimensionError("apply_mask: tensor " + shape_str(rows.shape()) + " vs mask " +
                         std::to_string(mask.h()) + "x" + std::to_string(mask.w()));
  }
  const std::size_t d = rows.size() / cells;
  Tensor out = rows;
  for (std::size_t i = 0; i < cells; ++i)
    if (!mask[i])
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] = 0.0;
  return out;
}

}  // namespace bevfl
