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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bevfl/fed.hpp"
#include "bevfl/model.hpp"
#include "bevfl/synth.hpp"

namespace bevfl {

struct ClientSpec {
  std::string rig = "car";              // rig preset name, or "custom"
  std::optional<CameraRig> custom_rig;  // required when rig == "custom"
  std::size_t n_points = 0;             // nominal N_k; also the aggregation weight
  std::size_t local_epochs = 1;
  std::vector<std::size_t> camera_subset;  // 1-based; empty keeps every camera
  friend bool operator==(const ClientSpec&, const ClientSpec&) = default;
};

struct ExperimentConfig {
  std::string name = "custom";
  Scheme scheme = Scheme::kFedCaP;
  std::vector<ClientSpec> clients;
  std::size_t rounds = 60;
  std::size_t warmup_rounds = 20;
  double lr_u = 1e-2;
  double lr_v = 1e-2;
  std::size_t batch_size = 4;
  std::size_t clients_per_round = 0;  // 0 selects every client
  double topk_retention = 1.0;
  double straggler_ratio = 0.0;
  bool persistent_stragglers = false;
  std::vector<std::size_t> reliable_clients;
  std::optional<std::uint64_t> bits_budget;
  bool amcm = true;
  bool upload_masked_query = true;
  bool literal_subset_weights = false;
  bool strict_two_pass = false;
  bool persistent_optimizer = false;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double scale = 0.05;  // data points generated per nominal N_k
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  RigPresetOptions rig_options;
  SceneOptions world;
  ModelConfig model;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
// Fails on unknown keys and on a missing seed.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// uc1 .. uc5 desk-scale analogs.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Generated data points for a client: max(5, round(n_points * scale)).
std::size_t scaled_points(const ClientSpec& spec, double scale);
CameraRig client_rig(const ExperimentConfig& config, std::size_t k);
std::vector<ClientState> build_clients(const ExperimentConfig& config);
FedOptions fed_options(const ExperimentConfig& config, std::size_t threads = 1);

struct RunOptions {
  std::size_t threads = 1;
  bool write_checkpoint = true;
  // Called after every round with that round's records.
  std::function<void(const FedEngine&, const std::vector<RoundRecord>&)> on_round;
};

struct ClientSummary {
  std::size_t id = 0;
  std::string rig;
  std::optional<double> final_iou;
  std::optional<double> final_train_loss;
  std::optional<std::size_t> rounds_to_target;
};

struct RunSummary {
  std::size_t rounds_completed = 0;
  bool budget_stopped = false;
  std::vector<ClientSummary> clients;
  std::optional<double> mean_final_iou;
  std::uint64_t bits_up = 0;
  std::uint64_t bits_down = 0;
  // Per round: mean over reporting clients.
  std::vector<double> train_loss;
  std::vector<double> grad_norm;
  std::optional<double> grad_norm_slope;
  std::optional<CrossEvalMatrix> cross_eval;
};

inline constexpr const char* kRoundsCsvHeader =
    "round,client_id,selected,straggler,train_loss,val_iou,bits_up,bits_down,cum_bits";

// Runs the round loop. With an output directory, writes config.json,
// rounds.csv, report.json, cross_eval.csv (two or more clients) and
// checkpoint.bin.
RunSummary run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out_dir,
                          const RunOptions& options = {});

nlohmann::json report_to_json(const ExperimentConfig& config, const RunSummary& summary);
std::string rounds_csv_row(const RoundRecord& r);
std::string cross_eval_csv(const CrossEvalMatrix& m);

// Axes: local_epochs, topk_retention, straggler_ratio, clients_per_round.
// Run i uses seed derive_seed(config.seed, {sweep stream, i}) and writes to
// out_dir/run_<i>; summary.csv merges one row per value.
std::vector<RunSummary> sweep(const ExperimentConfig& config, const std::string& axis,
                              const std::vector<double>& values, const std::filesystem::path& out_dir,
                              const RunOptions& options = {});
ExperimentConfig apply_axis(ExperimentConfig config, const std::string& axis, double value);

// Federated checkpoint: experiment config, round, u and every v_k.
void save_federated_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config,
                               const FedEngine& engine);
struct RestoredRun {
  ExperimentConfig config;
  std::unique_ptr<FedEngine> engine;
};
RestoredRun load_federated_checkpoint(const std::filesystem::path& path, std::size_t threads = 1);

}  // namespace bevfl
