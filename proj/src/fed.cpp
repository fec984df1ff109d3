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
#include "bevfl/fed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <thread>

#include "bevfl/amcm.hpp"
#include "bevfl/errors.hpp"
#include "bevfl/metrics.hpp"

namespace bevfl {

Delta Delta::from_dense(std::vector<double> values) {
  Delta d;
  d.length = values.size();
  d.dense = std::move(values);
  d.bits_upload = d.length * kValueBits;
  return d;
}

std::vector<double> Delta::to_dense() const {
  if (!sparse) return dense;
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
  return out;
}

Delta compress_topk(const Delta& delta, double retention) {
  if (!(retention > 0.0 && retention <= 1.0)) throw ConfigError("compress_topk: retention must be in (0, 1]");
  if (retention == 1.0) return Delta::from_dense(delta.to_dense());
  const std::vector<double> dense = delta.to_dense();
  const std::size_t n = dense.size();
  // The epsilon keeps products like 0.1 * 1000 from rounding up to k + 1.
  const auto k = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(retention * static_cast<double>(n) - 1e-9)));
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(dense[a]), mb = std::abs(dense[b]);
    return ma != mb ? ma > mb : a < b;
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  std::sort(order.begin(), order.end());
  Delta out;
  out.length = n;
  out.sparse = true;
  out.indices = std::move(order);
  for (auto i : out.indices) out.values.push_back(dense[i]);
  out.bits_upload = k * (kIndexBits + kValueBits);
  return out;
}

std::vector<WeightedDelta> secure_agg_stub(std::vector<WeightedDelta> deltas) { return deltas; }

std::vector<double> aggregate(std::vector<WeightedDelta> deltas, std::span<const double> u,
                              const AggregationOptions& options) {
  if (deltas.empty()) throw ConfigError("aggregate: no client deltas");
  std::sort(deltas.begin(), deltas.end(),
            [](const WeightedDelta& a, const WeightedDelta& b) { return a.client < b.client; });
  double n_sel = 0.0;
  for (const auto& d : deltas) {
    if (!(d.weight > 0.0)) throw ConfigError("aggregate: weights must be positive");
    if (d.delta.length != u.size()) {
      throw DimensionError("aggregate: delta of length " + std::to_string(d.delta.length) +
                           " for " + std::to_string(u.size()) + " public parameters");
    }
    n_sel += d.weight;
  }
  std::vector<double> out(u.begin(), u.end());
  if (!options.literal_subset_weights) {
    for (const auto& d : deltas) {
      const double w = d.weight / n_sel;
      if (d.delta.sparse) {
        for (std::size_t i = 0; i < d.delta.indices.size(); ++i) out[d.delta.indices[i]] += w * d.delta.values[i];
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * d.delta.dense[i];
      }
    }
    return out;
  }
  if (!(options.total_weight > 0.0)) throw ConfigError("aggregate: literal mode needs total_weight");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& d : deltas) {
    const double w = d.weight / options.total_weight;
    const auto dense = d.delta.to_dense();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (u[i] + dense[i]);
  }
  return out;
}

std::vector<std::size_t> client_selection(std::size_t k, std::size_t m, Rng& rng) {
  if (m < 1 || m > k) {
    throw ConfigError("client_selection: M=" + std::to_string(m) + " outside [1, " + std::to_string(k) + "]");
  }
  auto s = rng.sample_without_replacement(k, m);
  std::sort(s.begin(), s.end());
  return s;
}

double lr_schedule(std::size_t t, double base_lr, std::size_t warmup, std::size_t total) {
  if (total <= warmup || t <= warmup) return base_lr;
  const double x = static_cast<double>(std::min(t, total) - warmup) / static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

void ClientState::validate() const {
  if (local_epochs < 1) throw ConfigError("client: local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("client: batch_size must be >= 1");
  if (!(lr_u >= 0.0) || !(lr_v >= 0.0)) throw ConfigError("client: learning rates must be >= 0");
  if (!(weight > 0.0)) throw ConfigError("client: weight must be > 0");
}

namespace {

double grad_norm(const ParamStore& p) {
  double s = 0.0;
  for (double g : p.grads()) s += g * g;
  return std::sqrt(s);
}

}  // namespace

LocalResult local_update(ClientState& client, std::span<const double> u, ToyBevt& model,
                         const ParamSplit& split, double lr_scale, std::uint64_t seed,
                         const LocalTrainingOptions& options) {
  client.validate();
  if (client.data.train.empty()) {
    throw ConfigError("local_update: client " + std::to_string(client.id) + " has no training data");
  }
  ParamStore& params = model.params();
  if (params.size() != split.public_size + split.private_size) {
    throw DimensionError("local_update: model does not match the parameter split");
  }
  split.scatter_public(u, params.values());
  split.scatter_private(client.private_params, params.values());

  AdamW fresh;
  AdamW* adam = nullptr;
  if (options.optimizer == OptimizerKind::kAdamW) {
    if (options.persistent_optimizer) {
      if (!client.optimizer) client.optimizer.emplace(params, options.adamw);
      adam = &*client.optimizer;
    } else {
      fresh = AdamW(params, options.adamw);
      adam = &fresh;
    }
  }
  auto step = [&](double lr, const std::vector<IndexRange>& ranges) {
    if (ranges.empty()) return;
    if (adam) {
      adam->step(params, lr, ranges);
    } else {
      sgd_step(params, lr, ranges);
    }
  };
  const double lr_v = client.lr_v * lr_scale;
  const double lr_u = client.lr_u * lr_scale;

  LocalResult result;
  Rng rng(seed);
  std::vector<std::size_t> order(client.data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0.0, norm_sum = 0.0;
  std::size_t batches = 0;
  try {
    for (std::size_t e = 0; e < client.local_epochs; ++e) {
      rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += client.batch_size) {
        std::vector<const DataPoint*> batch;
        for (std::size_t i = b; i < std::min(order.size(), b + client.batch_size); ++i) {
          batch.push_back(&client.data.train[order[i]]);
        }
        params.zero_grad();
        const double loss = model.loss_and_grad(batch, client.rig, client.mask);
        if (!std::isfinite(loss)) throw NonFiniteError("local_update: non-finite loss");
        loss_sum += loss;
        norm_sum += grad_norm(params);
        ++batches;
        step(lr_v, split.private_ranges);
        if (options.strict_two_pass && !split.private_ranges.empty()) {
          params.zero_grad();
          model.loss_and_grad(batch, client.rig, client.mask);
        }
        step(lr_u, split.public_ranges);
      }
    }
  } catch (const NonFiniteError& e) {
    result.aborted = true;
    result.error = e.what();
    return result;
  }
  client.private_params = split.gather_private(params.values());
  auto uk = split.gather_public(params.values());
  for (std::size_t i = 0; i < uk.size(); ++i) uk[i] -= u[i];
  result.delta = Delta::from_dense(std::move(uk));
  result.train_loss = loss_sum / static_cast<double>(batches);
  result.grad_norm = norm_sum / static_cast<double>(batches);
  return result;
}

std::optional<double> evaluate_iou(const ModelConfig& config, const ParamStore& params,
                                   const std::vector<DataPoint>& points, const CameraRig& rig,
                                   const BevGrid& mask) {
  if (points.empty()) return std::nullopt;
  ToyBevt model(config);
  model.params() = params;
  IouCounts counts;
  for (const auto& p : points) counts += iou_counts(model.predict(p.views, rig, mask), p.bev_gt, mask);
  return counts.value();
}

FedEngine::FedEngine(ModelConfig model_config, FedOptions options, std::vector<ClientState> clients)
    : model_config_(model_config),
      options_(std::move(options)),
      policy_(PartitionPolicy::for_scheme(options_.scheme)),
      clients_(std::move(clients)) {
  model_config_.validate();
  options_.network.validate();
  if (clients_.empty()) throw ConfigError("engine: no clients");
  if (options_.clients_per_round == 0) options_.clients_per_round = clients_.size();
  if (options_.clients_per_round > clients_.size()) {
    throw ConfigError("engine: clients_per_round exceeds client count");
  }
  if (!(options_.topk_retention > 0.0 && options_.topk_retention <= 1.0)) {
    throw ConfigError("engine: topk_retention must be in (0, 1]");
  }
  init_ = init_params(model_config_, derive_seed(options_.seed, {kStreamInit}));
  split_ = split_params(init_, policy_);
  u_ = split_.gather_public(init_.values());
  double total = 0.0;
  for (std::size_t k = 0; k < clients_.size(); ++k) {
    auto& c = clients_[k];
    if (c.id != k) throw ConfigError("engine: client ids must be 0..K-1 in order");
    c.validate();
    if (c.private_params.empty()) c.private_params = split_.gather_private(init_.values());
    if (c.mask.size() == 0) c.mask = BevGrid(model_config_.bev_h, model_config_.bev_w, 1);
    total += c.weight;
  }
  if (options_.aggregation.total_weight <= 0.0) options_.aggregation.total_weight = total;
  reliability_rank_.resize(clients_.size());
  Rng rank_rng(derive_seed(options_.seed, {kStreamStraggler, 0}));
  auto perm = rank_rng.sample_without_replacement(clients_.size(), clients_.size());
  for (std::size_t i = 0; i < perm.size(); ++i) reliability_rank_[perm[i]] = i;
}

bool FedEngine::finished() const { return round_ >= options_.rounds || budget_stop_; }

std::vector<IndexRange> FedEngine::masked_query_ranges(const ClientState& c) const {
  std::vector<IndexRange> out;
  if (policy_.private_segments.count(kSegBevQuery)) return out;
  ToyBevt probe(model_config_);
  const auto& q = probe.slot("bev_query");
  const std::size_t F = model_config_.feat_dim;
  for (std::size_t i = 0; i < c.mask.size(); ++i)
    if (!c.mask[i]) out.push_back({q.offset + i * F, q.offset + (i + 1) * F});
  return out;
}

ParamStore FedEngine::personalized_params(std::size_t k) const {
  ParamStore p = init_;
  split_.scatter_public(u_, p.values());
  split_.scatter_private(clients_.at(k).private_params, p.values());
  return p;
}

std::optional<double> FedEngine::evaluate(std::size_t k) const {
  const auto& c = clients_.at(k);
  return evaluate_iou(model_config_, personalized_params(k), c.data.test, c.rig, c.mask);
}

void FedEngine::restore(std::size_t round, std::vector<double> u,
                        std::vector<std::vector<double>> private_params) {
  if (u.size() != split_.public_size || private_params.size() != clients_.size()) {
    throw DimensionError("engine: restore state does not match the engine layout");
  }
  round_ = round;
  u_ = std::move(u);
  for (std::size_t k = 0; k < clients_.size(); ++k) {
    if (private_params[k].size() != split_.private_size) {
      throw DimensionError("engine: restore private slice size mismatch");
    }
    clients_[k].private_params = std::move(private_params[k]);
  }
}

std::vector<RoundRecord> FedEngine::run_round() {
  const std::size_t t = ++round_;
  const std::size_t K = clients_.size();
  const double lr_scale = lr_schedule(t, 1.0, options_.warmup_rounds, options_.rounds);

  Rng select_rng(derive_seed(options_.seed, {kStreamSelect, t}));
  const auto selected = client_selection(K, options_.clients_per_round, select_rng);
  Rng straggler_rng(derive_seed(options_.seed, {kStreamStraggler, t}));
  const auto draw = options_.network.persistent
                        ? rank_stragglers(selected, options_.network.straggler_ratio, reliability_rank_,
                                          options_.network.reliable_clients)
                        : sample_stragglers(selected, options_.network.straggler_ratio, straggler_rng,
                                            options_.network.reliable_clients);

  // Local training; results land in per-slot storage so scheduling cannot
  // change the outcome.
  std::vector<LocalResult> results(selected.size());
  std::vector<std::string> failures(selected.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    ToyBevt model(model_config_);
    for (std::size_t i = next++; i < selected.size(); i = next++) {
      ClientState& c = clients_[selected[i]];
      try {
        results[i] = local_update(c, u_, model, split_, lr_scale,
                                  derive_seed(options_.seed, {kStreamLocal, t, c.id}), options_.local);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options_.threads, selected.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  for (const auto& f : failures)
    if (!f.empty()) throw Error("round " + std::to_string(t) + ": " + f);

  std::vector<RoundRecord> records(K);
  for (std::size_t k = 0; k < K; ++k) {
    records[k].round = t;
    records[k].client_id = k;
  }
  std::vector<WeightedDelta> uploads;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const std::size_t k = selected[i];
    auto& c = clients_[k];
    auto& rec = records[k];
    auto& res = results[i];
    c.selected_before = true;
    rec.selected = true;
    rec.straggler = std::binary_search(draw.stragglers.begin(), draw.stragglers.end(), k);
    rec.aborted = res.aborted;

    std::size_t masked_entries = 0;
    std::vector<std::size_t> masked_positions;
    if (!options_.upload_masked_query) {
      std::vector<IndexRange> ranges = masked_query_ranges(c);
      for (std::size_t pos = 0; pos < split_.public_size; ++pos) {
        const std::size_t g = split_.public_to_global(pos);
        for (const auto& r : ranges)
          if (g >= r.begin && g < r.end) masked_positions.push_back(pos);
      }
      masked_entries = masked_positions.size();
    }
    rec.bits_down = (split_.public_size - masked_entries) * kValueBits;
    if (!res.aborted) {
      rec.train_loss = res.train_loss;
      rec.grad_norm = res.grad_norm;
    }
    if (!rec.straggler && !res.aborted) {
      for (std::size_t pos : masked_positions) res.delta.dense[pos] = 0.0;
      Delta sent = compress_topk(res.delta, options_.topk_retention);
      if (!sent.sparse) sent.bits_upload = (sent.length - masked_entries) * kValueBits;
      rec.bits_up = sent.bits_upload;
      if (observer_) observer_(t, k, sent);
      uploads.push_back({k, std::move(sent), c.weight});
    }
    ledger_.account(t, k, rec.bits_up, rec.bits_down);
  }
  for (auto& rec : records) rec.cum_bits = ledger_.total();

  if (!uploads.empty()) {
    u_ = aggregate(secure_agg_stub(std::move(uploads)), u_, options_.aggregation);
  }
  if (options_.evaluate) {
    for (std::size_t k = 0; k < K; ++k) records[k].val_iou = evaluate(k);
  }
  budget_stop_ = ledger_.exhausted(options_.network.bits_budget);
  return records;
}

std::vector<RoundRecord> FedEngine::run() {
  std::vector<RoundRecord> all;
  while (!finished()) {
    auto r = run_round();
    all.insert(all.end(), r.begin(), r.end());
  }
  return all;
}

CrossEvalMatrix cross_evaluate(const FedEngine& engine) {
  const auto& clients = engine.clients();
  CrossEvalMatrix m;
  m.n = clients.size();
  m.entries.assign(m.n * m.n, 0.0);
  std::vector<ParamStore> models;
  for (std::size_t j = 0; j < m.n; ++j) models.push_back(engine.personalized_params(j));
  for (std::size_t i = 0; i < m.n; ++i) {
    const auto& c = clients[i];
    if (c.mask.h() != engine.model_config().bev_h || c.mask.w() != engine.model_config().bev_w) {
      throw DimensionError("cross_evaluate: client " + std::to_string(i) + " grid shape differs");
    }
    for (std::size_t j = 0; j < m.n; ++j) {
      auto v = evaluate_iou(engine.model_config(), models[j], c.data.test, c.rig, c.mask);
      if (!v) throw ConfigError("cross_evaluate: client " + std::to_string(i) + " has no test data");
      m.entries[i * m.n + j] = *v;
    }
  }
  return m;
}

}  // namespace bevfl
