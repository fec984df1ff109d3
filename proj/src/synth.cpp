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
#include "bevfl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "bevfl/errors.hpp"

namespace bevfl {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void CameraPose::validate() const {
  if (!(height > 0.0)) throw ConfigError("camera: height must be > 0");
  if (!(fov_azimuth > 0.0 && fov_azimuth <= 360.0)) {
    throw ConfigError("camera: fov_azimuth must be in (0, 360]");
  }
  if (n_azimuth_bins < 1 || n_elevation_bins < 1) throw ConfigError("camera: bin counts must be >= 1");
}

void CameraRig::validate() const {
  if (cameras.empty() || cameras.size() > kMaxRigCameras) {
    throw ConfigError("rig '" + rig_name + "': camera count must be in [1, 8], got " +
                      std::to_string(cameras.size()));
  }
  for (const auto& c : cameras) {
    c.validate();
    if (c.n_azimuth_bins != cameras[0].n_azimuth_bins ||
        c.n_elevation_bins != cameras[0].n_elevation_bins) {
      throw ConfigError("rig '" + rig_name + "': cameras must share bin counts");
    }
  }
}

CameraRig rig_from_preset(const std::string& name, const RigPresetOptions& options) {
  double height = 0.0, pitch = 0.0;
  std::array<double, 4> yaws = {0.0, 100.0, -100.0, 180.0};
  if (name == "car") {
    height = 1.8;
    pitch = 0.0;
  } else if (name == "bus") {
    height = 3.2;
    pitch = -5.0;
  } else if (name == "truck") {
    height = 4.8;
    pitch = -5.0;
    yaws[3] = options.truck_rear_yaw;
  } else if (name == "infrastructure") {
    height = 8.2;
    pitch = -10.0;
  } else {
    throw ConfigError("unknown rig preset '" + name + "'");
  }
  CameraRig rig;
  rig.rig_name = name;
  for (double yaw : yaws) {
    CameraPose c;
    c.height = height;
    c.roll = 0.0;
    c.pitch = pitch;
    c.yaw = yaw;
    c.fov_azimuth = options.fov_azimuth;
    c.n_azimuth_bins = options.n_azimuth_bins;
    c.n_elevation_bins = options.n_elevation_bins;
    rig.cameras.push_back(c);
  }
  return rig;
}

CameraRig select_cameras(const CameraRig& rig, const std::vector<std::size_t>& indices) {
  CameraRig out;
  out.rig_name = rig.rig_name;
  for (std::size_t i : indices) {
    if (i < 1 || i > rig.cameras.size()) {
      throw ConfigError("camera index " + std::to_string(i) + " out of range for rig '" +
                        rig.rig_name + "'");
    }
    out.cameras.push_back(rig.cameras[i - 1]);
  }
  out.validate();
  return out;
}

Scene sample_scene(Rng& rng, const SceneOptions& options) {
  if (!(options.extent > 0.0)) throw ConfigError("scene: extent must be > 0");
  if (options.min_objects > options.max_objects || options.min_radius > options.max_radius ||
      !(options.min_radius > 0.0)) {
    throw ConfigError("scene: invalid object count or radius range");
  }
  Scene scene;
  scene.world_extent = options.extent;
  const auto n = rng.uniform_int(static_cast<std::int64_t>(options.min_objects),
                                 static_cast<std::int64_t>(options.max_objects));
  for (std::int64_t i = 0; i < n; ++i) {
    SceneObject o;
    o.x = rng.uniform(-options.extent, options.extent);
    o.y = rng.uniform(-options.extent, options.extent);
    o.radius = rng.uniform(options.min_radius, options.max_radius);
    scene.objects.push_back(o);
  }
  return scene;
}

double bin_bearing_deg(const CameraPose& cam, std::size_t bin) {
  const double width = cam.fov_azimuth / static_cast<double>(cam.n_azimuth_bins);
  return cam.yaw - cam.fov_azimuth / 2.0 + (static_cast<double>(bin) + 0.5) * width;
}

bool cast_ray(const Scene& scene, double bearing_deg, RayHit& hit) {
  const double ux = std::cos(bearing_deg * kDeg), uy = std::sin(bearing_deg * kDeg);
  bool found = false;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    // |s u - c|^2 = r^2  =>  s^2 - 2 s (u.c) + |c|^2 - r^2 = 0
    const double b = ux * o.x + uy * o.y;
    const double c = o.x * o.x + o.y * o.y - o.radius * o.radius;
    double s;
    if (c <= 0.0) {
      s = 0.0;  // origin inside the disc
    } else {
      const double disc = b * b - c;
      if (disc < 0.0 || b <= 0.0) continue;
      s = b - std::sqrt(disc);
    }
    if (!found || s < hit.distance) {
      hit = {i, s};
      found = true;
    }
  }
  return found;
}

Tensor render_views(const Scene& scene, const CameraRig& rig) {
  rig.validate();
  const std::size_t L = rig.cameras.size();
  const std::size_t A = rig.cameras[0].n_azimuth_bins;
  const std::size_t E = rig.cameras[0].n_elevation_bins;
  Tensor views({L, A, E, kViewChannels}, 0.0);
  const double band = 90.0 / static_cast<double>(E);
  for (std::size_t j = 0; j < L; ++j) {
    const auto& cam = rig.cameras[j];
    for (std::size_t a = 0; a < A; ++a) {
      RayHit hit;
      if (!cast_ray(scene, bin_bearing_deg(cam, a), hit)) continue;
      const double d = hit.distance;
      const double radius = scene.objects[hit.object].radius;
      // Base of the object relative to the optical axis, in [-90, 0) when
      // looking down at it.
      const double rel_elev = std::atan2(-cam.height, d) / kDeg - cam.pitch;
      const auto e = static_cast<std::size_t>(
          std::clamp(std::floor((rel_elev + 90.0) / band), 0.0, static_cast<double>(E - 1)));
      double* cell = views.data().data() + ((j * A + a) * E + e) * kViewChannels;
      cell[kPresence] = 1.0;
      cell[kInvDistance] = 1.0 / (1.0 + d);
      cell[kElevation] = rel_elev / 90.0;
      cell[kAngularSize] = d > 0.0 ? std::min(1.0, radius / d) : 1.0;
    }
  }
  return views;
}

std::array<double, 2> bev_cell_center(std::size_t r, std::size_t c, std::size_t h, std::size_t w,
                                      double extent) {
  const double ch = 2.0 * extent / static_cast<double>(h);
  const double cw = 2.0 * extent / static_cast<double>(w);
  return {extent - (static_cast<double>(r) + 0.5) * ch, extent - (static_cast<double>(c) + 0.5) * cw};
}

BevGrid rasterize_bev(const Scene& scene, std::size_t h, std::size_t w, double extent) {
  if (h < 4 || w < 4) throw ConfigError("rasterize_bev: grid dims must be >= 4");
  BevGrid grid(h, w, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const auto [x, y] = bev_cell_center(r, c, h, w, extent);
      for (const auto& o : scene.objects) {
        const double dx = x - o.x, dy = y - o.y;
        if (dx * dx + dy * dy <= o.radius * o.radius) {
          grid.at(r, c) = 1;
          break;
        }
      }
    }
  }
  return grid;
}

DataPoint make_data_point(const Scene& scene, const CameraRig& rig, const DatasetOptions& options) {
  return {render_views(scene, rig),
          rasterize_bev(scene, options.bev_h, options.bev_w, options.scene.extent)};
}

ClientDataset build_client_dataset(const CameraRig& rig, std::size_t n_points, std::uint64_t seed,
                                   const DatasetOptions& options) {
  if (n_points < 1) throw ConfigError("dataset: n_points must be >= 1");
  rig.validate();
  ClientDataset data;
  data.rig = rig;
  data.seed = seed;
  data.options = options;
  for (std::size_t i = 0; i < n_points; ++i) {
    Rng rng(derive_seed(seed, {kStreamData, i}));
    data.scenes.push_back(sample_scene(rng, options.scene));
  }
  return rerender(data, rig);
}

ClientDataset rerender(const ClientDataset& data, const CameraRig& rig) {
  ClientDataset out;
  out.rig = rig;
  out.seed = data.seed;
  out.options = data.options;
  out.scenes = data.scenes;
  const std::size_t n = out.scenes.size();
  const std::size_t n_test = n / 5;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = make_data_point(out.scenes[i], rig, out.options);
    (i < n - n_test ? out.train : out.test).push_back(std::move(p));
  }
  return out;
}

namespace {

nlohmann::json pose_json(const CameraPose& c) {
  return {{"height", c.height},         {"roll", c.roll},
          {"pitch", c.pitch},           {"yaw", c.yaw},
          {"fov_azimuth", c.fov_azimuth}, {"n_azimuth_bins", c.n_azimuth_bins},
          {"n_elevation_bins", c.n_elevation_bins}};
}

}  // namespace

std::string dataset_to_json(const ClientDataset& data) {
  nlohmann::json j;
  j["rig"]["rig_name"] = data.rig.rig_name;
  for (const auto& c : data.rig.cameras) j["rig"]["cameras"].push_back(pose_json(c));
  j["seed"] = data.seed;
  const auto& s = data.options.scene;
  j["options"] = {{"bev_h", data.options.bev_h},   {"bev_w", data.options.bev_w},
                  {"extent", s.extent},             {"min_objects", s.min_objects},
                  {"max_objects", s.max_objects},   {"min_radius", s.min_radius},
                  {"max_radius", s.max_radius}};
  j["scenes"] = nlohmann::json::array();
  for (const auto& sc : data.scenes) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : sc.objects) objs.push_back({o.x, o.y, o.radius});
    j["scenes"].push_back({{"world_extent", sc.world_extent}, {"objects", objs}});
  }
  return j.dump(2);
}

ClientDataset dataset_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ClientDataset data;
    data.rig.rig_name = j.at("rig").at("rig_name").get<std::string>();
    for (const auto& c : j.at("rig").at("cameras")) {
      CameraPose p;
      p.height = c.at("height");
      p.roll = c.at("roll");
      p.pitch = c.at("pitch");
      p.yaw = c.at("yaw");
      p.fov_azimuth = c.at("fov_azimuth");
      p.n_azimuth_bins = c.at("n_azimuth_bins");
      p.n_elevation_bins = c.at("n_elevation_bins");
      data.rig.cameras.push_back(p);
    }
    data.seed = j.at("seed");
    const auto& o = j.at("options");
    data.options.bev_h = o.at("bev_h");
    data.options.bev_w = o.at("bev_w");
    data.options.scene.extent = o.at("extent");
    data.options.scene.min_objects = o.at("min_objects");
    data.options.scene.max_objects = o.at("max_objects");
    data.options.scene.min_radius = o.at("min_radius");
    data.options.scene.max_radius = o.at("max_radius");
    for (const auto& sc : j.at("scenes")) {
      Scene s;
      s.world_extent = sc.at("world_extent");
      for (const auto& ob : sc.at("objects")) s.objects.push_back({ob.at(0), ob.at(1), ob.at(2)});
      data.scenes.push_back(std::move(s));
    }
    return rerender(data, data.rig);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset json: ") + e.what());
  }
}

}  // namespace bevfl
