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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bevfl/bev_grid.hpp"
#include "bevfl/metrics.hpp"
#include "bevfl/model.hpp"
#include "bevfl/netsim.hpp"
#include "bevfl/optim.hpp"
#include "bevfl/rng.hpp"
#include "bevfl/synth.hpp"

namespace bevfl {

// ---- client update payloads -------------------------------------------------

// Update of the public parameters, in public-position coordinates.
struct Delta {
  std::size_t length = 0;
  bool sparse = false;
  std::vector<double> dense;             // length entries when !sparse
  std::vector<std::uint32_t> indices;    // strictly increasing when sparse
  std::vector<double> values;            // parallel to indices
  std::uint64_t bits_upload = 0;

  static Delta from_dense(std::vector<double> values);
  std::vector<double> to_dense() const;
  // Number of transmitted entries.
  std::size_t nnz() const { return sparse ? indices.size() : dense.size(); }
};

// Keeps ceil(retention * length) largest-magnitude entries, ties to the lower
// index. retention == 1 passes the delta through dense.
Delta compress_topk(const Delta& delta, double retention);

struct WeightedDelta {
  std::size_t client = 0;
  Delta delta;
  double weight = 0.0;  // N_k
};

// Transport hook standing in for secure aggregation. Identity.
std::vector<WeightedDelta> secure_agg_stub(std::vector<WeightedDelta> deltas);
inline constexpr const char* kSecureAggregationMode = "stub";

struct AggregationOptions {
  // false: u + sum_k (N_k / N_sel) delta_k over the selected survivors.
  // true: sum_k (N_k / N_all) (u + delta_k), the subset formula taken as written.
  bool literal_subset_weights = false;
  double total_weight = 0.0;  // N over all registered clients; literal mode only
};

// Deltas are summed in ascending client order regardless of input order.
std::vector<double> aggregate(std::vector<WeightedDelta> deltas, std::span<const double> u,
                              const AggregationOptions& options = {});

// Uniform sample of m of k clients without replacement, ascending.
std::vector<std::size_t> client_selection(std::size_t k, std::size_t m, Rng& rng);

// Constant base_lr for t <= warmup, then cosine annealing to zero at t = total.
double lr_schedule(std::size_t t, double base_lr, std::size_t warmup, std::size_t total);

// ---- clients ----------------------------------------------------------------

enum class OptimizerKind { kAdamW, kSgd };

struct LocalTrainingOptions {
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  AdamWOptions adamw;
  bool persistent_optimizer = false;
  // Recompute the gradient after the private step before the public step.
  bool strict_two_pass = false;
};

struct ClientState {
  std::size_t id = 0;
  CameraRig rig;
  ClientDataset data;
  BevGrid mask;                        // AMCM mask, or all-ones when disabled
  std::vector<double> private_params;  // v_k, in private-position coordinates
  std::size_t local_epochs = 1;
  std::size_t batch_size = 4;
  double lr_u = 1e-3;
  double lr_v = 1e-3;
  double weight = 1.0;  // N_k
  bool selected_before = false;
  std::optional<AdamW> optimizer;  // kept only with persistent_optimizer

  void validate() const;
};

struct LocalResult {
  Delta delta;
  double train_loss = 0.0;
  double grad_norm = 0.0;
  bool aborted = false;
  std::string error;
};

// One ClientUpdate: rebuilds u (+) v_k into `model`, trains for E epochs of
// shuffled batches, keeps the new v_k in `client` and returns u_k - u.
// lr_scale multiplies both client learning rates (schedule factor).
LocalResult local_update(ClientState& client, std::span<const double> u, ToyBevt& model,
                         const ParamSplit& split, double lr_scale, std::uint64_t seed,
                         const LocalTrainingOptions& options = {});

// ---- engine -----------------------------------------------------------------

struct RoundRecord {
  std::size_t round = 0;
  std::size_t client_id = 0;
  bool selected = false;
  bool straggler = false;
  bool aborted = false;
  std::optional<double> train_loss;
  std::optional<double> grad_norm;
  std::optional<double> val_iou;
  std::uint64_t bits_up = 0;
  std::uint64_t bits_down = 0;
  std::uint64_t cum_bits = 0;
};

struct FedOptions {
  Scheme scheme = Scheme::kFedCaP;
  std::size_t rounds = 60;
  std::size_t warmup_rounds = 20;
  std::size_t clients_per_round = 0;  // 0 selects every client
  double topk_retention = 1.0;
  AggregationOptions aggregation;
  LocalTrainingOptions local;
  NetworkProfile network;
  // Count and transmit AMCM-masked BEV query rows (they carry no gradient).
  bool upload_masked_query = true;
  std::size_t threads = 1;
  bool evaluate = true;
  std::uint64_t seed = 1;
};

// Synchronous federated training over a fixed client registry. Server state
// holds only the public parameters u; private slices live in ClientState.
class FedEngine {
 public:
  using TransmitObserver =
      std::function<void(std::size_t round, std::size_t client, const Delta& delta)>;

  FedEngine(ModelConfig model_config, FedOptions options, std::vector<ClientState> clients);

  // Runs one round and returns one record per registered client.
  std::vector<RoundRecord> run_round();
  // Runs until `rounds` are done or the bits budget is exhausted.
  std::vector<RoundRecord> run();
  bool finished() const;

  std::size_t round() const { return round_; }
  const std::vector<double>& public_params() const { return u_; }
  const ParamSplit& split() const { return split_; }
  const PartitionPolicy& policy() const { return policy_; }
  const ModelConfig& model_config() const { return model_config_; }
  const FedOptions& options() const { return options_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  std::vector<ClientState>& clients() { return clients_; }
  const CommLedger& ledger() const { return ledger_; }
  // Global ranges of the BEV query rows a client's mask deactivates.
  std::vector<IndexRange> masked_query_ranges(const ClientState& c) const;

  // Full parameter store u (+) v_k for client k.
  ParamStore personalized_params(std::size_t k) const;
  // Pooled IoU of client model_k on client k's test split.
  std::optional<double> evaluate(std::size_t k) const;

  void set_transmit_observer(TransmitObserver f) { observer_ = std::move(f); }
  // Restores server/client state from a checkpoint.
  void restore(std::size_t round, std::vector<double> u, std::vector<std::vector<double>> private_params);

 private:
  ModelConfig model_config_;
  FedOptions options_;
  PartitionPolicy policy_;
  ParamSplit split_;
  ParamStore init_;
  std::vector<double> u_;
  std::vector<ClientState> clients_;
  std::vector<std::size_t> reliability_rank_;
  CommLedger ledger_;
  std::size_t round_ = 0;
  bool budget_stop_ = false;
  TransmitObserver observer_;
};

// Pooled intersection-over-union of a parameter store on a set of points.
std::optional<double> evaluate_iou(const ModelConfig& config, const ParamStore& params,
                                   const std::vector<DataPoint>& points, const CameraRig& rig,
                                   const BevGrid& mask);

// Entry (i, j): client j's personalized model on client i's testset, rendered
// and masked with client i's rig.
CrossEvalMatrix cross_evaluate(const FedEngine& engine);

}  // namespace bevfl
