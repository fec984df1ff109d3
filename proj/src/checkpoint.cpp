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
#include "bevfl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "bevfl/errors.hpp"

namespace bevfl {
namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      std::span<const double> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot open " + path.string() + " for writing");
  const std::string text = header.dump();
  out.write(kCheckpointMagic, 8);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(out, payload.size());
  for (double v : payload) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw Error("checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw Error("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const auto header_len = get_u64(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw Error("checkpoint: truncated header");
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  const auto n = get_u64(in);
  ck.payload.resize(n);
  for (auto& v : ck.payload) v = std::bit_cast<double>(get_u64(in));
  return ck;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"feat_dim", c.feat_dim},
          {"bev_h", c.bev_h},
          {"bev_w", c.bev_w},
          {"n_heads", c.n_heads},
          {"n_attn_layers", c.n_attn_layers},
          {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"pos_hidden", c.pos_hidden},
          {"refine_hidden", c.refine_hidden},
          {"view_channels", c.view_channels},
          {"max_cameras", c.max_cameras}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"feat_dim", "bev_h", "bev_w", "n_heads", "n_attn_layers", "encoder_hidden",
                 "decoder_hidden", "pos_hidden", "refine_hidden", "view_channels", "max_cameras"},
             "model config");
  ModelConfig c;
  try {
    c.feat_dim = j.value("feat_dim", c.feat_dim);
    c.bev_h = j.value("bev_h", c.bev_h);
    c.bev_w = j.value("bev_w", c.bev_w);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.n_attn_layers = j.value("n_attn_layers", c.n_attn_layers);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.pos_hidden = j.value("pos_hidden", c.pos_hidden);
    c.refine_hidden = j.value("refine_hidden", c.refine_hidden);
    c.view_channels = j.value("view_channels", c.view_channels);
    c.max_cameras = j.value("max_cameras", c.max_cameras);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json segment_table(const ParamStore& params) {
  auto t = nlohmann::json::array();
  for (const auto& s : params.segments()) t.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
  return t;
}

void save_params(const std::filesystem::path& path, const ParamStore& params, const ModelConfig& config,
                 std::uint64_t seed) {
  nlohmann::json h = {{"format", "bevfl-model"},
                      {"version", 1},
                      {"segments", segment_table(params)},
                      {"config", model_config_to_json(config)},
                      {"seed", seed}};
  write_checkpoint(path, h, params.values());
}

LoadedModel load_params(const std::filesystem::path& path) {
  auto ck = read_checkpoint(path);
  try {
    if (ck.header.at("format") != "bevfl-model") throw Error("checkpoint: not a model checkpoint");
    LoadedModel m;
    m.config = model_config_from_json(ck.header.at("config"));
    m.seed = ck.header.at("seed");
    ToyBevt model(m.config);
    m.params = model.params();
    if (segment_table(m.params) != ck.header.at("segments")) {
      throw Error("checkpoint: segment table does not match the configured model");
    }
    if (ck.payload.size() != m.params.size()) throw Error("checkpoint: payload size mismatch");
    std::copy(ck.payload.begin(), ck.payload.end(), m.params.values().begin());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
}

}  // namespace bevfl
