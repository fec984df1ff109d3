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
#include <set>
#include <string>
#include <vector>

#include "bevfl/bev_grid.hpp"
#include "bevfl/graph.hpp"
#include "bevfl/optim.hpp"
#include "bevfl/param_store.hpp"
#include "bevfl/synth.hpp"
#include "bevfl/tensor.hpp"

namespace bevfl {

inline constexpr const char* kSegEncoder = "encoder";
inline constexpr const char* kSegPosEmbed = "pos_embed";
inline constexpr const char* kSegBevQuery = "bev_query";
inline constexpr const char* kSegAttention = "attention";
inline constexpr const char* kSegRefine = "refine";
inline constexpr const char* kSegDecoder = "decoder";

struct ModelConfig {
  std::size_t feat_dim = 16;
  std::size_t bev_h = 16;
  std::size_t bev_w = 16;
  std::size_t n_heads = 2;
  std::size_t n_attn_layers = 1;
  std::size_t encoder_hidden = 32;
  std::size_t decoder_hidden = 32;
  std::size_t pos_hidden = 32;
  std::size_t refine_hidden = 32;
  // Token width: elevation bins x view channels.
  std::size_t view_channels = 16;
  std::size_t max_cameras = kMaxRigCameras;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// ---- geometry stage of the positional embedding ----------------------------

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// R = Rz(yaw) * Ry(pitch) * Rx(roll); Ry is signed so positive pitch raises
// the forward axis.
Mat3 camera_rotation(const CameraPose& cam);
// Unit ray of an azimuth bin in the camera frame (x forward, y left, z up).
Vec3 camera_ray(const CameraPose& cam, std::size_t bin);

struct VehicleRay {
  Vec3 direction;  // R p
  Vec3 origin;     // t = (0, 0, height)
};
VehicleRay to_vehicle_frame(const CameraPose& cam, const Vec3& camera_dir);
// One ray per (camera, azimuth bin), camera-major.
std::vector<VehicleRay> vehicle_rays(const CameraRig& rig);
// [L*A, 6] rows of (direction, origin): the input of the embedding MLP.
Tensor positional_inputs(const CameraRig& rig);

// ---- model -----------------------------------------------------------------

struct TensorSlot {
  enum class Kind { kWeight, kBias, kQuery };
  std::string name;
  std::string segment;
  std::size_t offset = 0;
  Shape shape;
  Kind kind = Kind::kWeight;
};

// Desk-scale BEV transformer: token encoder, positional embedding MLP,
// learnable BEV query, multi-head cross-attention, refinement MLP, decoder.
class ToyBevt {
 public:
  explicit ToyBevt(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  const TensorSlot& slot(const std::string& name) const;

  // Records the forward pass on g and returns [bev_h * bev_w, 1] logits.
  // Query rows at mask == 0 are zeroed so they receive no gradient; callers
  // exclude those cells from loss and metrics.
  Graph::Var forward(Graph& g, const Tensor& views, const CameraRig& rig, const BevGrid& mask);
  // Positional embedding alone: [L*A, feat_dim].
  Graph::Var positional_embedding(Graph& g, const CameraRig& rig);

  // Inference helper returning the logits tensor.
  Tensor predict(const Tensor& views, const CameraRig& rig, const BevGrid& mask);
  // Mean masked BCE over a batch; accumulates parameter gradients (averaged
  // over the batch) into params().grads(). Returns the mean loss.
  double loss_and_grad(const std::vector<const DataPoint*>& batch, const CameraRig& rig,
                       const BevGrid& mask);

 private:
  Graph::Var p(Graph& g, const std::string& name);
  Graph::Var mlp(Graph& g, Graph::Var x, const std::string& prefix);

  ModelConfig config_;
  std::vector<TensorSlot> layout_;
  ParamStore params_;
};

// Xavier-uniform weights, zero biases, BEV query uniform in [-0.1, 0.1].
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);
ToyBevt make_model(const ModelConfig& config, std::uint64_t seed);

// ---- personalization partitions --------------------------------------------

enum class Scheme { kFedAvg, kFedRep, kFedTP, kFedCaP };

std::string scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct PartitionPolicy {
  Scheme scheme = Scheme::kFedAvg;
  std::set<std::string> private_segments;

  static PartitionPolicy for_scheme(Scheme s);
};

// Disjoint index views of a store. Public positions are numbered by walking
// public_ranges in order; that numbering is the coordinate system of u.
struct ParamSplit {
  std::vector<IndexRange> public_ranges;
  std::vector<IndexRange> private_ranges;
  std::size_t public_size = 0;
  std::size_t private_size = 0;

  std::vector<double> gather_public(std::span<const double> values) const;
  std::vector<double> gather_private(std::span<const double> values) const;
  void scatter_public(std::span<const double> u, std::span<double> values) const;
  void scatter_private(std::span<const double> v, std::span<double> values) const;
  // Flat store index of public position i.
  std::size_t public_to_global(std::size_t i) const;
  bool is_private(std::size_t global_index) const;
};

ParamSplit split_params(const ParamStore& params, const PartitionPolicy& policy);

}  // namespace bevfl
