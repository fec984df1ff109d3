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
#include <optional>
#include <vector>

#include "bevfl/bev_grid.hpp"
#include "bevfl/synth.hpp"
#include "bevfl/tensor.hpp"

namespace bevfl {

// Horizontal field-of-view wedge of one camera, degrees and meters.
struct FovWedge {
  double yaw_center = 0.0;
  double half_angle = 50.0;
  double max_range = 16.0;

  // Bearing within (yaw - half, yaw + half] (upper edge closed) and range
  // within max_range.
  bool contains(double bearing_deg, double range) const;
};

// Wraps an angle in degrees into (-180, 180].
double wrap_deg(double deg);

std::vector<FovWedge> fov_wedges(const CameraRig& rig, double max_range);

// Active-cell mask over the uniform BEV query: a cell is active iff its center
// falls in the union of the rig's FoV wedges. max_range defaults to extent.
// A cell centered exactly on the ego origin is always active.
BevGrid amcm_mask(const CameraRig& rig, std::size_t h, std::size_t w, double extent,
                  std::optional<double> max_range = std::nullopt);

// Zeroes the rows of a [h*w, d] (or [h, w, d]) tensor at inactive cells.
Tensor apply_mask(const Tensor& rows, const BevGrid& mask);

}  // namespace bevfl
