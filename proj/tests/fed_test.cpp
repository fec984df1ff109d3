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
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "bevfl/amcm.hpp"
#include "bevfl/errors.hpp"
#include "bevfl/fed.hpp"
#include "test_util.hpp"

namespace bevfl {
namespace {

Delta dense(std::vector<double> v) { return Delta::from_dense(std::move(v)); }

ClientState make_client(std::size_t id, const std::string& rig_name, std::size_t n, std::uint64_t seed,
                        double lr = 3e-3) {
  ClientState c;
  c.id = id;
  c.rig = rig_from_preset(rig_name);
  c.data = build_client_dataset(c.rig, n, seed);
  c.mask = amcm_mask(c.rig, 16, 16, 16.0);
  c.lr_u = c.lr_v = lr;
  c.weight = static_cast<double>(n);
  return c;
}

// ---- compression ----------------------------------------------------------

TEST(TopK, SmallExample) {
  const auto d = compress_topk(dense({3, -1, 0.5, 2}), 0.5);
  EXPECT_TRUE(d.sparse);
  EXPECT_EQ(d.indices, (std::vector<std::uint32_t>{0, 3}));
  EXPECT_EQ(d.values, (std::vector<double>{3, 2}));
  EXPECT_EQ(d.bits_upload, 2u * 96u);
  EXPECT_EQ(d.to_dense(), (std::vector<double>{3, 0, 0, 2}));
}

TEST(TopK, FullRetentionIsDensePassThrough) {
  const std::vector<double> v = {1, -2, 3};
  const auto d = compress_topk(dense(v), 1.0);
  EXPECT_FALSE(d.sparse);
  EXPECT_EQ(d.to_dense(), v);
  EXPECT_EQ(d.bits_upload, 3u * 64u);
  EXPECT_THROW(compress_topk(dense(v), 0.0), ConfigError);
  EXPECT_THROW(compress_topk(dense(v), 1.5), ConfigError);
}

TEST(TopK, MatchesFullSortOracleWithTies) {
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1000);
    // Coarse values force many magnitude ties.
    for (auto& x : v) x = static_cast<double>(rng.uniform_int(-20, 20)) * 0.5;
    const auto d = compress_topk(dense(v), 0.1);
    std::vector<std::uint32_t> order(v.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return std::abs(v[a]) > std::abs(v[b]); });
    std::vector<std::uint32_t> want(order.begin(), order.begin() + 100);
    std::sort(want.begin(), want.end());
    EXPECT_EQ(d.indices, want);
    EXPECT_EQ(d.bits_upload, 100u * 96u);
    for (std::size_t i = 0; i < d.indices.size(); ++i) EXPECT_EQ(d.values[i], v[d.indices[i]]);
  }
}

TEST(TopK, CeilOfRetention) {
  const auto d = compress_topk(dense(std::vector<double>(10, 1.0)), 0.25);
  EXPECT_EQ(d.nnz(), 3u);
  EXPECT_EQ(d.indices, (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(SecureAgg, StubIsIdentity) {
  std::vector<WeightedDelta> in = {{2, dense({1, 2}), 3.0}, {0, dense({4, 5}), 1.0}};
  const auto out = secure_agg_stub(in);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].client, 2u);
  EXPECT_EQ(out[1].delta.dense, (std::vector<double>{4, 5}));
  EXPECT_STREQ(kSecureAggregationMode, "stub");
}

// ---- aggregation ----------------------------------------------------------

TEST(Aggregate, SingleClientIdentity) {
  const std::vector<double> u = {1.0, -2.0, 0.25};
  const auto out = aggregate({{0, dense({0.5, 0.5, -0.25}), 7.0}}, u);
  EXPECT_EQ(out, (std::vector<double>{1.5, -1.5, 0.0}));
}

TEST(Aggregate, WeightedMeanArithmetic) {
  const auto out = aggregate({{0, dense({4, 0}), 1.0}, {1, dense({0, 4}), 3.0}}, std::vector<double>{0, 0});
  EXPECT_EQ(out, (std::vector<double>{1, 3}));
}

TEST(Aggregate, MatchesWeightedSumOracle) {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 5));
    const std::size_t len = 50;
    std::vector<double> u(len);
    for (auto& x : u) x = rng.uniform(-1, 1);
    std::vector<WeightedDelta> ds;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> v(len);
      for (auto& x : v) x = rng.uniform(-1, 1);
      const double w = trial < 10 && n == 3 ? std::vector<double>{1388, 1448, 6372}[k] : rng.uniform(0.1, 10.0);
      ds.push_back({k, dense(v), w});
    }
    double total = 0.0;
    for (const auto& d : ds) total += d.weight;
    std::vector<double> want(u);
    for (std::size_t i = 0; i < len; ++i)
      for (const auto& d : ds) want[i] += d.weight / total * d.delta.dense[i];
    const auto got = aggregate(ds, u);
    for (std::size_t i = 0; i < len; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Aggregate, Uc1WeightRatios) {
  const std::vector<double> w = {1388, 1448, 6372};
  const double n = 1388 + 1448 + 6372;
  const auto out = aggregate({{0, dense({1, 0, 0}), w[0]}, {1, dense({0, 1, 0}), w[1]}, {2, dense({0, 0, 1}), w[2]}},
                             std::vector<double>(3, 0.0));
  EXPECT_NEAR(out[0], 0.1507, 1e-4);
  EXPECT_NEAR(out[1], 0.1572, 1e-4);
  EXPECT_NEAR(out[2], 0.6920, 1e-4);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(out[k], w[k] / n, 1e-15);
}

TEST(Aggregate, PermutationInvariantAndConservative) {
  Rng rng(8);
  std::vector<double> u(20);
  for (auto& x : u) x = rng.uniform(-1, 1);
  std::vector<WeightedDelta> ds;
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> v(20);
    for (auto& x : v) x = rng.uniform(-1, 1);
    ds.push_back({k, dense(v), rng.uniform(1, 5)});
  }
  auto shuffled = ds;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[1], shuffled[3]);
  EXPECT_EQ(aggregate(ds, u), aggregate(shuffled, u));

  std::vector<WeightedDelta> zeros;
  for (std::size_t k = 0; k < 4; ++k) zeros.push_back({k, dense(std::vector<double>(20, 0.0)), 1.0 + k});
  EXPECT_EQ(aggregate(zeros, u), u);
}

TEST(Aggregate, SparseDeltasScatter) {
  auto sp = compress_topk(dense({0, 5, 0, -1}), 0.25);
  const auto out = aggregate({{0, sp, 1.0}, {1, dense({1, 1, 1, 1}), 1.0}}, std::vector<double>(4, 0.0));
  EXPECT_EQ(out, (std::vector<double>{0.5, 3.0, 0.5, 0.5}));
}

TEST(Aggregate, LiteralSubsetForm) {
  AggregationOptions o;
  o.literal_subset_weights = true;
  o.total_weight = 10.0;
  const std::vector<double> u = {1.0, 1.0};
  const auto out = aggregate({{0, dense({1, 0}), 2.0}, {1, dense({0, 1}), 3.0}}, u, o);
  // 0.2 * (u + d0) + 0.3 * (u + d1)
  EXPECT_NEAR(out[0], 0.2 * 2 + 0.3 * 1, 1e-15);
  EXPECT_NEAR(out[1], 0.2 * 1 + 0.3 * 2, 1e-15);
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate({}, std::vector<double>{1}), ConfigError);
  EXPECT_THROW(aggregate({{0, dense({1}), 0.0}}, std::vector<double>{1}), ConfigError);
  EXPECT_THROW(aggregate({{0, dense({1, 2}), 1.0}}, std::vector<double>{1}), DimensionError);
}

// ---- selection and schedule ------------------------------------------------

TEST(ClientSelection, AllWhenMEqualsK) {
  Rng rng(1);
  EXPECT_EQ(client_selection(5, 5, rng), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(ClientSelection, ReproducibleSingleton) {
  Rng a(99), b(99);
  const auto s = client_selection(3, 1, a);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s, client_selection(3, 1, b));
}

TEST(ClientSelection, UniformFrequency) {
  Rng rng(7);
  std::vector<int> hits(4, 0);
  for (int t = 0; t < 10000; ++t) ++hits[client_selection(4, 1, rng)[0]];
  for (int h : hits) EXPECT_NEAR(h / 10000.0, 0.25, 0.02);
}

TEST(ClientSelection, OutOfRangeThrows) {
  Rng rng(1);
  EXPECT_THROW(client_selection(3, 0, rng), ConfigError);
  EXPECT_THROW(client_selection(3, 4, rng), ConfigError);
}

TEST(LrSchedule, WarmupThenCosine) {
  for (std::size_t t = 1; t <= 20; ++t) EXPECT_EQ(lr_schedule(t, 2e-5, 20, 60), 2e-5);
  EXPECT_NEAR(lr_schedule(60, 2e-5, 20, 60), 0.0, 1e-20);
  EXPECT_NEAR(lr_schedule(40, 2e-5, 20, 60), 1e-5, 1e-18);
  EXPECT_EQ(lr_schedule(50, 0.1, 60, 60), 0.1);
  EXPECT_EQ(lr_schedule(5, 0.1, 10, 5), 0.1);
  for (std::size_t t = 21; t < 60; ++t) EXPECT_LE(lr_schedule(t + 1, 1.0, 20, 60), lr_schedule(t, 1.0, 20, 60));
}

// ---- local update ------------------------------------------------------------

struct LocalFixture : ::testing::Test {
  ModelConfig cfg;
  ParamStore init = init_params(cfg, 3);
  ToyBevt model{cfg};
};

TEST_F(LocalFixture, FrozenPublicSliceGivesZeroDelta) {
  const auto split = split_params(init, PartitionPolicy::for_scheme(Scheme::kFedCaP));
  auto c = make_client(0, "bus", 10, 4);
  c.lr_u = 0.0;
  c.private_params = split.gather_private(init.values());
  const auto v0 = c.private_params;
  const auto u = split.gather_public(init.values());
  const auto r = local_update(c, u, model, split, 1.0, 17, {});
  ASSERT_FALSE(r.aborted);
  for (double x : r.delta.dense) EXPECT_EQ(x, 0.0);
  EXPECT_NE(c.private_params, v0);
  // Only pos_embed moved in the rebuilt model.
  const auto& pos = model.params().segment("pos_embed");
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (i >= pos.offset && i < pos.offset + pos.length) continue;
    EXPECT_EQ(model.params().values()[i], init.values()[i]);
  }
}

TEST_F(LocalFixture, SingleBatchSgdMatchesHandStep) {
  for (auto scheme : {Scheme::kFedAvg, Scheme::kFedCaP, Scheme::kFedTP}) {
    const auto split = split_params(init, PartitionPolicy::for_scheme(scheme));
    auto c = make_client(0, "truck", 5, 8, 0.05);
    c.batch_size = 8;  // every training point in one batch
    c.private_params = split.gather_private(init.values());
    const auto u = split.gather_public(init.values());
    LocalTrainingOptions o;
    o.optimizer = OptimizerKind::kSgd;
    const auto r = local_update(c, u, model, split, 1.0, 1, o);

    ToyBevt ref(cfg);
    ref.params() = init;
    std::vector<const DataPoint*> batch;
    for (const auto& p : c.data.train) batch.push_back(&p);
    ref.params().zero_grad();
    ref.loss_and_grad(batch, c.rig, c.mask);
    const auto g = split.gather_public(ref.params().grads());
    ASSERT_EQ(r.delta.dense.size(), g.size());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(r.delta.dense[i], -0.05 * g[i], 1e-12);
    const auto gv = split.gather_private(ref.params().grads());
    const auto v0 = split.gather_private(init.values());
    for (std::size_t i = 0; i < gv.size(); ++i) EXPECT_NEAR(c.private_params[i], v0[i] - 0.05 * gv[i], 1e-12);
  }
}

TEST_F(LocalFixture, FedAvgTrainsEveryParameter) {
  const auto split = split_params(init, PartitionPolicy::for_scheme(Scheme::kFedAvg));
  auto c = make_client(0, "car", 10, 2);
  const auto r = local_update(c, split.gather_public(init.values()), model, split, 1.0, 5, {});
  EXPECT_TRUE(c.private_params.empty());
  std::size_t moved = 0;
  for (double x : r.delta.dense) moved += x != 0.0;
  EXPECT_GT(moved, init.size() / 2);
  EXPECT_GT(r.train_loss, 0.0);
  EXPECT_GT(r.grad_norm, 0.0);
}

TEST_F(LocalFixture, StrictTwoPassDiffersOnlyWhenPrivateExists) {
  const auto split = split_params(init, PartitionPolicy::for_scheme(Scheme::kFedCaP));
  auto a = make_client(0, "bus", 10, 4), b = a;
  a.private_params = b.private_params = split.gather_private(init.values());
  const auto u = split.gather_public(init.values());
  LocalTrainingOptions strict;
  strict.strict_two_pass = true;
  const auto ra = local_update(a, u, model, split, 1.0, 3, {});
  const auto rb = local_update(b, u, model, split, 1.0, 3, strict);
  EXPECT_NE(ra.delta.dense, rb.delta.dense);
}

TEST_F(LocalFixture, EmptyDatasetThrowsAndNonFiniteAborts) {
  const auto split = split_params(init, PartitionPolicy::for_scheme(Scheme::kFedCaP));
  auto c = make_client(0, "car", 5, 1);
  c.private_params = split.gather_private(init.values());
  auto u = split.gather_public(init.values());
  auto empty = c;
  empty.data.train.clear();
  EXPECT_THROW(local_update(empty, u, model, split, 1.0, 1, {}), ConfigError);
  const auto v0 = c.private_params;
  u[0] = std::nan("");
  const auto r = local_update(c, u, model, split, 1.0, 1, {});
  EXPECT_TRUE(r.aborted);
  EXPECT_FALSE(r.error.empty());
  EXPECT_EQ(c.private_params, v0);
}

TEST(ClientStateValidate, RejectsBadHyperparameters) {
  ClientState c;
  c.local_epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.local_epochs = 1;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.batch_size = 1;
  c.weight = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ---- engine -------------------------------------------------------------------

std::vector<ClientState> three_clients(std::size_t n = 10) {
  return {make_client(0, "bus", n, 11), make_client(1, "truck", n, 12), make_client(2, "car", n, 13)};
}

TEST(Engine, OneRoundOneClientAdoptsItsModel) {
  FedOptions o;
  o.scheme = Scheme::kFedAvg;
  o.rounds = 1;
  o.warmup_rounds = 1;
  std::vector<ClientState> cs = {make_client(0, "car", 10, 3)};
  FedEngine e(ModelConfig{}, o, cs);
  const auto u0 = e.public_params();
  std::vector<double> sent;
  e.set_transmit_observer([&](std::size_t, std::size_t, const Delta& d) { sent = d.to_dense(); });
  e.run();
  ASSERT_EQ(sent.size(), u0.size());
  for (std::size_t i = 0; i < u0.size(); ++i) EXPECT_EQ(e.public_params()[i], u0[i] + sent[i]);
  EXPECT_TRUE(e.finished());
}

TEST(Engine, IdenticalClientsSendIdenticalDeltas) {
  FedOptions o;
  o.rounds = 2;
  // One batch per epoch, so only the summation order inside it depends on the client id.
  auto a = make_client(0, "bus", 5, 5), b = make_client(1, "bus", 5, 5);
  FedEngine e(ModelConfig{}, o, {a, b});
  std::vector<std::vector<double>> sent(2);
  e.set_transmit_observer([&](std::size_t round, std::size_t k, const Delta& d) {
    if (round == 1) sent[k] = d.to_dense();
  });
  e.run_round();
  ASSERT_EQ(sent[0].size(), sent[1].size());
  for (std::size_t i = 0; i < sent[0].size(); ++i) EXPECT_NEAR(sent[0][i], sent[1][i], 1e-12);
}

TEST(Engine, PrivateIndicesNeverTransmitted) {
  FedOptions o;
  o.scheme = Scheme::kFedCaP;
  o.rounds = 3;
  o.topk_retention = 0.3;
  FedEngine e(ModelConfig{}, o, three_clients());
  const auto& split = e.split();
  std::size_t audited = 0;
  e.set_transmit_observer([&](std::size_t, std::size_t, const Delta& d) {
    EXPECT_EQ(d.length, split.public_size);
    for (auto idx : d.indices) {
      EXPECT_FALSE(split.is_private(split.public_to_global(idx)));
      ++audited;
    }
  });
  e.run();
  EXPECT_GT(audited, 0u);
  EXPECT_EQ(e.public_params().size(), split.public_size);
}

TEST(Engine, StragglersNeverReachAggregation) {
  FedOptions o;
  o.rounds = 4;
  o.network.straggler_ratio = 0.5;
  FedEngine e(ModelConfig{}, o, three_clients());
  std::set<std::pair<std::size_t, std::size_t>> uploaded;
  e.set_transmit_observer([&](std::size_t t, std::size_t k, const Delta&) { uploaded.insert({t, k}); });
  for (int t = 0; t < 4; ++t) {
    const auto recs = e.run_round();
    std::size_t stragglers = 0;
    for (const auto& r : recs) {
      EXPECT_TRUE(r.selected);
      EXPECT_EQ(uploaded.count({r.round, r.client_id}) == 1, !r.straggler);
      EXPECT_EQ(r.bits_up == 0, r.straggler);
      EXPECT_GT(r.bits_down, 0u);
      stragglers += r.straggler;
    }
    EXPECT_EQ(stragglers, 1u);
  }
}

TEST(Engine, DownloadBitsAreDenseBroadcast) {
  FedOptions o;
  o.rounds = 1;
  o.topk_retention = 0.1;
  FedEngine e(ModelConfig{}, o, three_clients());
  const auto recs = e.run_round();
  const std::size_t k = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(e.split().public_size) - 1e-9));
  for (const auto& r : recs) {
    EXPECT_EQ(r.bits_down, e.split().public_size * 64);
    EXPECT_EQ(r.bits_up, k * 96);
  }
  EXPECT_EQ(e.ledger().total(), recs.back().cum_bits);
}

TEST(Engine, MaskedQueryRowsCanBeLeftOut) {
  FedOptions o;
  o.rounds = 1;
  o.upload_masked_query = false;
  std::vector<ClientState> cs = {make_client(0, "car", 10, 1)};
  cs[0].rig = select_cameras(cs[0].rig, {1});
  cs[0].data = rerender(cs[0].data, cs[0].rig);
  cs[0].mask = amcm_mask(cs[0].rig, 16, 16, 16.0);
  FedEngine e(ModelConfig{}, o, cs);
  const std::size_t masked = (256 - cs[0].mask.count()) * 16;
  const auto recs = e.run_round();
  EXPECT_EQ(recs[0].bits_down, (e.split().public_size - masked) * 64);
  EXPECT_EQ(recs[0].bits_up, (e.split().public_size - masked) * 64);
}

TEST(Engine, SelectionSubsetAndDeterminismAcrossThreads) {
  FedOptions o;
  o.rounds = 3;
  o.clients_per_round = 2;
  std::vector<std::vector<RoundRecord>> runs;
  std::vector<std::vector<double>> finals;
  for (std::size_t threads : {1u, 3u}) {
    o.threads = threads;
    FedEngine e(ModelConfig{}, o, three_clients());
    auto recs = e.run();
    std::size_t selected = 0;
    for (const auto& r : recs) selected += r.selected;
    EXPECT_EQ(selected, 6u);
    runs.push_back(recs);
    finals.push_back(e.public_params());
  }
  EXPECT_EQ(finals[0], finals[1]);
  ASSERT_EQ(runs[0].size(), runs[1].size());
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    EXPECT_EQ(runs[0][i].train_loss, runs[1][i].train_loss);
    EXPECT_EQ(runs[0][i].val_iou, runs[1][i].val_iou);
    EXPECT_EQ(runs[0][i].cum_bits, runs[1][i].cum_bits);
  }
}

TEST(Engine, BitsBudgetStopsAfterTheRound) {
  FedOptions o;
  o.rounds = 10;
  o.network.bits_budget = 1;
  FedEngine e(ModelConfig{}, o, three_clients());
  e.run();
  EXPECT_EQ(e.round(), 1u);
}

TEST(Engine, AbortedClientsLeaveUUnchanged) {
  FedOptions o;
  o.rounds = 1;
  o.local.optimizer = OptimizerKind::kSgd;
  auto cs = three_clients();
  for (auto& c : cs) c.lr_u = c.lr_v = 1e300;
  for (auto& c : cs) c.local_epochs = 2;
  FedEngine e(ModelConfig{}, o, cs);
  const auto u0 = e.public_params();
  const auto recs = e.run_round();
  for (const auto& r : recs) EXPECT_TRUE(r.aborted);
  EXPECT_EQ(e.public_params(), u0);
}

TEST(Engine, PersonalizedModelsShareThePublicPart) {
  FedOptions o;
  o.rounds = 2;
  FedEngine e(ModelConfig{}, o, three_clients());
  e.run();
  const auto a = e.personalized_params(0), b = e.personalized_params(1);
  const auto& pos = a.segment("pos_embed");
  bool private_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_pos = i >= pos.offset && i < pos.offset + pos.length;
    if (!in_pos) EXPECT_EQ(a.values()[i], b.values()[i]);
    private_differs |= in_pos && a.values()[i] != b.values()[i];
  }
  EXPECT_TRUE(private_differs);
  const auto m = cross_evaluate(e);
  EXPECT_EQ(m.n, 3u);
  for (double v : m.entries) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(m.at(k, k), *e.evaluate(k));
}

TEST(Engine, RejectsBadRegistry) {
  FedOptions o;
  auto cs = three_clients();
  cs[1].id = 7;
  EXPECT_THROW(FedEngine(ModelConfig{}, o, cs), ConfigError);
  o.clients_per_round = 4;
  EXPECT_THROW(FedEngine(ModelConfig{}, o, three_clients()), ConfigError);
  EXPECT_THROW(FedEngine(ModelConfig{}, FedOptions{}, {}), ConfigError);
}

}  // namespace
}  // namespace bevfl
