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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bevfl/model.hpp"
#include "bevfl/param_store.hpp"

namespace bevfl {

// File layout: 8-byte magic, u64 header length, UTF-8 JSON header, u64 value
// count, float64 payload. All integers and floats little-endian.
inline constexpr char kCheckpointMagic[9] = "BEVFLCK1";

struct Checkpoint {
  nlohmann::json header;
  std::vector<double> payload;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      std::span<const double> payload);
Checkpoint read_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
// Unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json segment_table(const ParamStore& params);

// Single-model checkpoint: segment table, config and seed in the header.
void save_params(const std::filesystem::path& path, const ParamStore& params, const ModelConfig& config,
                 std::uint64_t seed);
struct LoadedModel {
  ModelConfig config;
  std::uint64_t seed = 0;
  ParamStore params;
};
LoadedModel load_params(const std::filesystem::path& path);

}  // namespace bevfl
