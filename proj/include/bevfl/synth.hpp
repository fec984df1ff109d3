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

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bevfl/bev_grid.hpp"
#include "bevfl/rng.hpp"
#include "bevfl/tensor.hpp"

namespace bevfl {

// Angles in degrees, height in meters. Positive pitch raises the optical axis.
struct CameraPose {
  double height = 1.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double fov_azimuth = 100.0;
  std::size_t n_azimuth_bins = 24;
  std::size_t n_elevation_bins = 4;

  void validate() const;
  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

inline constexpr std::size_t kMaxRigCameras = 8;

struct CameraRig {
  std::string rig_name = "custom";
  std::vector<CameraPose> cameras;

  void validate() const;
  std::size_t n_cameras() const { return cameras.size(); }
  friend bool operator==(const CameraRig&, const CameraRig&) = default;
};

struct RigPresetOptions {
  // The two published truck tables disagree on the rear camera (-80 vs 180).
  double truck_rear_yaw = 180.0;
  double fov_azimuth = 100.0;
  std::size_t n_azimuth_bins = 24;
  std::size_t n_elevation_bins = 4;
  friend bool operator==(const RigPresetOptions&, const RigPresetOptions&) = default;
};

// Presets: car, bus, truck, infrastructure. Cameras ordered front, left,
// right, rear.
CameraRig rig_from_preset(const std::string& name, const RigPresetOptions& options = {});
// Keeps the cameras at the given 1-based indices (1 = front), in that order.
CameraRig select_cameras(const CameraRig& rig, const std::vector<std::size_t>& indices);

struct SceneObject {
  double x = 0.0;
  double y = 0.0;
  double radius = 1.0;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::vector<SceneObject> objects;
  double world_extent = 16.0;  // half-width of the square centered on ego
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct SceneOptions {
  std::size_t min_objects = 1;
  std::size_t max_objects = 5;
  double min_radius = 0.5;
  double max_radius = 1.5;
  double extent = 16.0;
  friend bool operator==(const SceneOptions&, const SceneOptions&) = default;
};

Scene sample_scene(Rng& rng, const SceneOptions& options);

// View channels per (camera, azimuth bin, elevation bin).
inline constexpr std::size_t kViewChannels = 4;
enum ViewChannel : std::size_t { kPresence = 0, kInvDistance = 1, kElevation = 2, kAngularSize = 3 };

// Bearing in degrees (vehicle frame, counterclockwise from forward) of the
// center of azimuth bin `bin` of `cam`.
double bin_bearing_deg(const CameraPose& cam, std::size_t bin);

struct RayHit {
  std::size_t object = 0;
  double distance = 0.0;
};
// Nearest intersection of a horizontal ray from the ego origin, if any.
bool cast_ray(const Scene& scene, double bearing_deg, RayHit& hit);

// Tensor [L, A, E_b, 4]. All cameras of a rig must share A and E_b.
Tensor render_views(const Scene& scene, const CameraRig& rig);

// Center of BEV cell (r, c): row 0 is the far-forward edge, column 0 the far-left.
std::array<double, 2> bev_cell_center(std::size_t r, std::size_t c, std::size_t h, std::size_t w,
                                      double extent);
BevGrid rasterize_bev(const Scene& scene, std::size_t h, std::size_t w, double extent);

struct DataPoint {
  Tensor views;
  BevGrid bev_gt;
};

struct DatasetOptions {
  SceneOptions scene;
  std::size_t bev_h = 16;
  std::size_t bev_w = 16;
};

struct ClientDataset {
  CameraRig rig;
  std::uint64_t seed = 0;
  DatasetOptions options;
  std::vector<Scene> scenes;     // all points, train first
  std::vector<DataPoint> train;  // first n - floor(n / 5) points
  std::vector<DataPoint> test;
  std::size_t size() const { return train.size() + test.size(); }
};

DataPoint make_data_point(const Scene& scene, const CameraRig& rig, const DatasetOptions& options);
ClientDataset build_client_dataset(const CameraRig& rig, std::size_t n_points, std::uint64_t seed,
                                   const DatasetOptions& options = {});
// Re-renders a dataset for another rig over the same scenes.
ClientDataset rerender(const ClientDataset& data, const CameraRig& rig);

// JSON audit dump: rig, options, seed and scene list. Views are not stored;
// load re-renders them.
std::string dataset_to_json(const ClientDataset& data);
ClientDataset dataset_from_json(const std::string& text);

}  // namespace bevfl
