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
#include "bevfl/model.hpp"

#include <cmath>
#include <mutex>
#include <numbers>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "bevfl/errors.hpp"
#include "bevfl/rng.hpp"

namespace bevfl {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Keeps large per-sample graph buffers on the heap.
void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

void ModelConfig::validate() const {
  if (feat_dim == 0 || n_heads == 0 || feat_dim % n_heads != 0) {
    throw ConfigError("model: feat_dim must be a positive multiple of n_heads");
  }
  if (bev_h < 4 || bev_w < 4) throw ConfigError("model: BEV query grid must be at least 4x4");
  if (n_attn_layers == 0 || encoder_hidden == 0 || decoder_hidden == 0 || pos_hidden == 0 ||
      refine_hidden == 0 || view_channels == 0) {
    throw ConfigError("model: layer widths and counts must be positive");
  }
  if (max_cameras == 0) throw ConfigError("model: max_cameras must be positive");
}

Mat3 camera_rotation(const CameraPose& cam) {
  const double y = cam.yaw * kDeg, p = cam.pitch * kDeg, r = cam.roll * kDeg;
  const Mat3 rz = {{{std::cos(y), -std::sin(y), 0.0}, {std::sin(y), std::cos(y), 0.0}, {0.0, 0.0, 1.0}}};
  const Mat3 ry = {{{std::cos(p), 0.0, -std::sin(p)}, {0.0, 1.0, 0.0}, {std::sin(p), 0.0, std::cos(p)}}};
  const Mat3 rx = {{{1.0, 0.0, 0.0}, {0.0, std::cos(r), -std::sin(r)}, {0.0, std::sin(r), std::cos(r)}}};
  return matmul3(rz, matmul3(ry, rx));
}

Vec3 camera_ray(const CameraPose& cam, std::size_t bin) {
  const double a = (bin_bearing_deg(cam, bin) - cam.yaw) * kDeg;
  return {std::cos(a), std::sin(a), 0.0};
}

VehicleRay to_vehicle_frame(const CameraPose& cam, const Vec3& camera_dir) {
  const Mat3 r = camera_rotation(cam);
  VehicleRay out{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) out.direction[i] += r[i][k] * camera_dir[k];
  out.origin = {0.0, 0.0, cam.height};
  return out;
}

std::vector<VehicleRay> vehicle_rays(const CameraRig& rig) {
  std::vector<VehicleRay> rays;
  for (const auto& cam : rig.cameras)
    for (std::size_t a = 0; a < cam.n_azimuth_bins; ++a)
      rays.push_back(to_vehicle_frame(cam, camera_ray(cam, a)));
  return rays;
}

Tensor positional_inputs(const CameraRig& rig) {
  const auto rays = vehicle_rays(rig);
  Tensor out({rays.size(), 6});
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      out.at(i, k) = rays[i].direction[k];
      out.at(i, 3 + k) = rays[i].origin[k];
    }
  }
  return out;
}

Tensor bev_geometry(std::size_t h, std::size_t w) {
  Tensor out({h * w, 5});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const auto [x, y] = bev_cell_center(r, c, h, w, 1.0);
      const double rng = std::hypot(x, y);
      const std::size_t i = r * w + c;
      out.at(i, 0) = x; out.at(i, 1) = y; out.at(i, 2) = x / rng; out.at(i, 3) = y / rng; out.at(i, 4) = rng;
    }
  return out;
}

ToyBevt::ToyBevt(ModelConfig config) : config_(config) {
  config_.validate();
  tune_allocator();
  const std::size_t F = config_.feat_dim;
  using K = TensorSlot::Kind;
  auto add = [&](const std::string& seg, std::vector<std::pair<std::string, std::pair<Shape, K>>> slots) {
    std::size_t total = 0;
    for (const auto& s : slots) total += shape_size(s.second.first);
    std::size_t offset = params_.add_segment(seg, total);
    for (auto& [name, spec] : slots) {
      layout_.push_back({name, seg, offset, spec.first, spec.second});
      offset += shape_size(spec.first);
    }
  };
  auto mlp_slots = [&](const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out) {
    return std::vector<std::pair<std::string, std::pair<Shape, K>>>{
        {prefix + ".w1", {{in, hidden}, K::kWeight}},
        {prefix + ".b1", {{hidden}, K::kBias}},
        {prefix + ".w2", {{hidden, out}, K::kWeight}},
        {prefix + ".b2", {{out}, K::kBias}}};
  };
  add(kSegEncoder, mlp_slots("encoder", config_.view_channels, config_.encoder_hidden, F));
  add(kSegPosEmbed, mlp_slots("pos_embed", 6, config_.pos_hidden, F));
  add(kSegBevQuery, {{"bev_query", {{config_.bev_h * config_.bev_w, F}, K::kQuery}},
                     {"bev_geo", {{5, F}, K::kWeight}}});
  std::vector<std::pair<std::string, std::pair<Shape, K>>> attn;
  for (std::size_t l = 0; l < config_.n_attn_layers; ++l) {
    const std::string pre = "attention." + std::to_string(l) + ".";
    for (const char* m : {"q", "k", "v", "o"}) {
      attn.push_back({pre + "w" + m, {{F, F}, K::kWeight}});
      attn.push_back({pre + "b" + m, {{F}, K::kBias}});
    }
  }
  add(kSegAttention, std::move(attn));
  add(kSegRefine, mlp_slots("refine", F, config_.refine_hidden, F));
  add(kSegDecoder, mlp_slots("decoder", F, config_.decoder_hidden, 1));
}

const TensorSlot& ToyBevt::slot(const std::string& name) const {
  for (const auto& s : layout_)
    if (s.name == name) return s;
  throw Error("model: no parameter tensor '" + name + "'");
}

Graph::Var ToyBevt::p(Graph& g, const std::string& name) {
  const auto& s = slot(name);
  return g.param(params_, s.offset, s.shape);
}

Graph::Var ToyBevt::mlp(Graph& g, Graph::Var x, const std::string& prefix) {
  auto h = g.relu(g.linear(x, p(g, prefix + ".w1"), p(g, prefix + ".b1")));
  return g.linear(h, p(g, prefix + ".w2"), p(g, prefix + ".b2"));
}

Graph::Var ToyBevt::positional_embedding(Graph& g, const CameraRig& rig) {
  return mlp(g, g.constant(positional_inputs(rig)), "pos_embed");
}

Graph::Var ToyBevt::forward(Graph& g, const Tensor& views, const CameraRig& rig, const BevGrid& mask) {
  rig.validate();
  if (rig.n_cameras() > config_.max_cameras) {
    throw ConfigError("model: rig has " + std::to_string(rig.n_cameras()) +
                      " cameras, configured max is " + std::to_string(config_.max_cameras));
  }
  if (mask.h() != config_.bev_h || mask.w() != config_.bev_w) {
    throw DimensionError("model: mask " + std::to_string(mask.h()) + "x" + std::to_string(mask.w()) +
                         " does not match the BEV query grid");
  }
  if (views.rank() != 4 || views.shape()[0] != rig.n_cameras()) {
    throw DimensionError("model: views " + shape_str(views.shape()) + " do not match rig of " +
                         std::to_string(rig.n_cameras()) + " cameras");
  }
  const std::size_t tokens = views.shape()[0] * views.shape()[1];
  const std::size_t width = views.shape()[2] * views.shape()[3];
  if (width != config_.view_channels) {
    throw DimensionError("model: token width " + std::to_string(width) + " != view_channels " +
                         std::to_string(config_.view_channels));
  }

  const std::size_t F = config_.feat_dim;
  const std::size_t H = config_.n_heads;
  const std::size_t dh = F / H;

  auto x = g.constant(views.reshaped({tokens, width}));
  auto tok = g.add(mlp(g, x, "encoder"), positional_embedding(g, rig));

  auto q = g.mask_rows(g.add(p(g, "bev_query"), g.matmul(g.constant(bev_geometry(config_.bev_h, config_.bev_w)), p(g, "bev_geo"))), mask.cells());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < config_.n_attn_layers; ++l) {
    const std::string pre = "attention." + std::to_string(l) + ".";
    auto qp = g.linear(q, p(g, pre + "wq"), p(g, pre + "bq"));
    auto kp = g.linear(tok, p(g, pre + "wk"), p(g, pre + "bk"));
    auto vp = g.linear(tok, p(g, pre + "wv"), p(g, pre + "bv"));
    std::vector<Graph::Var> heads;
    for (std::size_t h = 0; h < H; ++h) {
      auto qh = g.slice_cols(qp, h * dh, (h + 1) * dh);
      auto kh = g.slice_cols(kp, h * dh, (h + 1) * dh);
      auto vh = g.slice_cols(vp, h * dh, (h + 1) * dh);
      auto attn = g.softmax_rows(g.scale(g.matmul_bt(qh, kh), inv_sqrt));
      heads.push_back(g.matmul(attn, vh));
    }
    auto merged = H == 1 ? heads[0] : g.concat_cols(heads);
    q = g.add(q, g.linear(merged, p(g, pre + "wo"), p(g, pre + "bo")));
  }
  auto refined = g.add(q, mlp(g, g.layer_norm(q), "refine"));
  auto logits = mlp(g, refined, "decoder");
  return logits;
}

Tensor ToyBevt::predict(const Tensor& views, const CameraRig& rig, const BevGrid& mask) {
  Graph g;
  return g.value(forward(g, views, rig, mask));
}

double ToyBevt::loss_and_grad(const std::vector<const DataPoint*>& batch, const CameraRig& rig,
                              const BevGrid& mask) {
  if (batch.empty()) throw EmptySupportError("loss_and_grad: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const DataPoint* dp : batch) {
    Graph g;
    auto logits = forward(g, dp->views, rig, mask);
    auto loss = g.bce_with_logits(logits, dp->bev_gt, mask);
    total += g.value(loss)[0];
    g.backward(g.scale(loss, inv));
  }
  return total * inv;
}

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  ToyBevt model(config);
  auto values = model.params().values();
  for (std::size_t i = 0; i < model.layout().size(); ++i) {
    const auto& s = model.layout()[i];
    Rng rng(derive_seed(seed, {kStreamInit, i}));
    const std::size_t n = shape_size(s.shape);
    switch (s.kind) {
      case TensorSlot::Kind::kBias:
        break;
      case TensorSlot::Kind::kQuery:
        for (std::size_t k = 0; k < n; ++k) values[s.offset + k] = rng.uniform(-0.1, 0.1);
        break;
      case TensorSlot::Kind::kWeight: {
        const double fan_in = static_cast<double>(s.shape[0]);
        const double fan_out = static_cast<double>(s.shape[1]);
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t k = 0; k < n; ++k) values[s.offset + k] = rng.uniform(-a, a);
        break;
      }
    }
  }
  return model.params();
}

ToyBevt make_model(const ModelConfig& config, std::uint64_t seed) {
  ToyBevt model(config);
  model.params() = init_params(config, seed);
  return model;
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::kFedAvg: return "FedAvg";
    case Scheme::kFedRep: return "FedRep";
    case Scheme::kFedTP: return "FedTP";
    case Scheme::kFedCaP: return "FedCaP";
  }
  return "?";
}

Scheme scheme_from_name(const std::string& name) {
  for (Scheme s : {Scheme::kFedAvg, Scheme::kFedRep, Scheme::kFedTP, Scheme::kFedCaP})
    if (scheme_name(s) == name) return s;
  throw ConfigError("unknown scheme '" + name + "' (expected FedAvg, FedRep, FedTP or FedCaP)");
}

PartitionPolicy PartitionPolicy::for_scheme(Scheme s) {
  switch (s) {
    case Scheme::kFedAvg: return {s, {}};
    case Scheme::kFedRep: return {s, {kSegEncoder}};
    case Scheme::kFedTP: return {s, {kSegAttention}};
    case Scheme::kFedCaP: return {s, {kSegPosEmbed}};
  }
  throw ConfigError("invalid scheme");
}

ParamSplit split_params(const ParamStore& params, const PartitionPolicy& policy) {
  for (const auto& name : policy.private_segments) {
    if (!params.has_segment(name)) throw ConfigError("partition: unknown segment '" + name + "'");
  }
  ParamSplit split;
  for (const auto& s : params.segments()) {
    const IndexRange r{s.offset, s.offset + s.length};
    if (policy.private_segments.count(s.name)) {
      split.private_ranges.push_back(r);
      split.private_size += r.size();
    } else {
      split.public_ranges.push_back(r);
      split.public_size += r.size();
    }
  }
  return split;
}

namespace {

std::vector<double> gather(const std::vector<IndexRange>& ranges, std::size_t n,
                           std::span<const double> values) {
  std::vector<double> out;
  out.reserve(n);
  for (const auto& r : ranges) out.insert(out.end(), values.begin() + r.begin, values.begin() + r.end);
  return out;
}

void scatter(const std::vector<IndexRange>& ranges, std::size_t n, std::span<const double> src,
             std::span<double> values) {
  if (src.size() != n) {
    throw DimensionError("partition: expected " + std::to_string(n) + " values, got " +
                         std::to_string(src.size()));
  }
  std::size_t pos = 0;
  for (const auto& r : ranges)
    for (std::size_t i = r.begin; i < r.end; ++i) values[i] = src[pos++];
}

}  // namespace

std::vector<double> ParamSplit::gather_public(std::span<const double> values) const {
  return gather(public_ranges, public_size, values);
}
std::vector<double> ParamSplit::gather_private(std::span<const double> values) const {
  return gather(private_ranges, private_size, values);
}
void ParamSplit::scatter_public(std::span<const double> u, std::span<double> values) const {
  scatter(public_ranges, public_size, u, values);
}
void ParamSplit::scatter_private(std::span<const double> v, std::span<double> values) const {
  scatter(private_ranges, private_size, v, values);
}

std::size_t ParamSplit::public_to_global(std::size_t i) const {
  for (const auto& r : public_ranges) {
    if (i < r.size()) return r.begin + i;
    i -= r.size();
  }
  throw DimensionError("partition: public position out of range");
}

bool ParamSplit::is_private(std::size_t global_index) const {
  for (const auto& r : private_ranges)
    if (global_index >= r.begin && global_index < r.end) return true;
  return false;
}

}  // namespace bevfl
