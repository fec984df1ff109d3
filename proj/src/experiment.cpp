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
#include "bevfl/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bevfl/amcm.hpp"
#include "bevfl/checkpoint.hpp"
#include "bevfl/errors.hpp"

namespace bevfl {
namespace {

using nlohmann::json;

// Reads keys out of a JSON object and rejects any it was not asked about.
class Fields {
 public:
  Fields(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ConfigError(what_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(what_ + "." + key + ": " + e.what());
    }
  }
  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  bool has(const char* key) const { return j_.contains(key); }
  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(what_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

json pose_to_json(const CameraPose& c) {
  return {{"height", c.height},   {"roll", c.roll},
          {"pitch", c.pitch},     {"yaw", c.yaw},
          {"fov_azimuth", c.fov_azimuth}, {"n_azimuth_bins", c.n_azimuth_bins},
          {"n_elevation_bins", c.n_elevation_bins}};
}

CameraPose pose_from_json(const json& j) {
  Fields f(j, "camera");
  CameraPose c;
  f.get("height", c.height);
  f.get("roll", c.roll);
  f.get("pitch", c.pitch);
  f.get("yaw", c.yaw);
  f.get("fov_azimuth", c.fov_azimuth);
  f.get("n_azimuth_bins", c.n_azimuth_bins);
  f.get("n_elevation_bins", c.n_elevation_bins);
  f.finish();
  return c;
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adamw"; }

OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "adamw") return OptimizerKind::kAdamW;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adamw or sgd)");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

ClientSpec client(const std::string& rig, std::size_t n, std::vector<std::size_t> subset = {}) {
  ClientSpec c;
  c.rig = rig;
  c.n_points = n;
  c.camera_subset = std::move(subset);
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (clients.empty()) throw ConfigError("config: at least one client is required");
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto& c = clients[k];
    const std::string who = "config: client " + std::to_string(k);
    if (c.n_points < 1) throw ConfigError(who + ": n_points must be >= 1");
    if (c.local_epochs < 1) throw ConfigError(who + ": local_epochs must be >= 1");
    if (c.rig == "custom" && !c.custom_rig) throw ConfigError(who + ": custom rig needs custom_rig");
    if (c.rig != "custom" && c.custom_rig) throw ConfigError(who + ": custom_rig given for preset rig");
  }
  if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
  if (!(lr_u >= 0.0) || !(lr_v >= 0.0)) throw ConfigError("config: learning rates must be >= 0");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (clients_per_round > clients.size()) throw ConfigError("config: clients_per_round exceeds client count");
  if (!(topk_retention > 0.0 && topk_retention <= 1.0)) throw ConfigError("config: topk_retention must be in (0, 1]");
  if (!(straggler_ratio >= 0.0 && straggler_ratio < 1.0)) throw ConfigError("config: straggler_ratio must be in [0, 1)");
  for (auto r : reliable_clients)
    if (r >= clients.size()) throw ConfigError("config: reliable client " + std::to_string(r) + " out of range");
  if (!(scale > 0.0)) throw ConfigError("config: scale must be > 0");
  model.validate();
  if (model.view_channels != rig_options.n_elevation_bins * kViewChannels) {
    throw ConfigError("config: model.view_channels must equal n_elevation_bins * " +
                      std::to_string(kViewChannels));
  }
}

json config_to_json(const ExperimentConfig& c) {
  json clients = json::array();
  for (const auto& s : c.clients) {
    json j = {{"rig", s.rig},
              {"n_points", s.n_points},
              {"local_epochs", s.local_epochs},
              {"camera_subset", s.camera_subset}};
    if (s.custom_rig) {
      json cams = json::array();
      for (const auto& p : s.custom_rig->cameras) cams.push_back(pose_to_json(p));
      j["custom_rig"] = {{"rig_name", s.custom_rig->rig_name}, {"cameras", cams}};
    }
    clients.push_back(j);
  }
  json j = {{"name", c.name},
            {"scheme", scheme_name(c.scheme)},
            {"clients", clients},
            {"rounds", c.rounds},
            {"warmup_rounds", c.warmup_rounds},
            {"lr_u", c.lr_u},
            {"lr_v", c.lr_v},
            {"batch_size", c.batch_size},
            {"clients_per_round", c.clients_per_round},
            {"topk_retention", c.topk_retention},
            {"straggler_ratio", c.straggler_ratio},
            {"persistent_stragglers", c.persistent_stragglers},
            {"reliable_clients", c.reliable_clients},
            {"bits_budget", c.bits_budget ? json(*c.bits_budget) : json(nullptr)},
            {"amcm", c.amcm},
            {"upload_masked_query", c.upload_masked_query},
            {"literal_subset_weights", c.literal_subset_weights},
            {"strict_two_pass", c.strict_two_pass},
            {"persistent_optimizer", c.persistent_optimizer},
            {"optimizer", optimizer_name(c.optimizer)},
            {"scale", c.scale},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"rig_options",
             {{"truck_rear_yaw", c.rig_options.truck_rear_yaw},
              {"fov_azimuth", c.rig_options.fov_azimuth},
              {"n_azimuth_bins", c.rig_options.n_azimuth_bins},
              {"n_elevation_bins", c.rig_options.n_elevation_bins}}},
            {"world",
             {{"extent", c.world.extent},
              {"min_objects", c.world.min_objects},
              {"max_objects", c.world.max_objects},
              {"min_radius", c.world.min_radius},
              {"max_radius", c.world.max_radius}}},
            {"model", model_config_to_json(c.model)}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Fields f(j, "config");
  if (!f.has("seed")) throw ConfigError("config: 'seed' is required");
  f.get("name", c.name);
  std::string scheme = scheme_name(c.scheme);
  f.get("scheme", scheme);
  c.scheme = scheme_from_name(scheme);
  if (const json* cl = f.raw("clients")) {
    if (!cl->is_array()) throw ConfigError("config.clients: expected an array");
    for (const auto& cj : *cl) {
      Fields g(cj, "config.clients[" + std::to_string(c.clients.size()) + "]");
      ClientSpec s;
      g.get("rig", s.rig);
      g.get("n_points", s.n_points);
      g.get("local_epochs", s.local_epochs);
      g.get("camera_subset", s.camera_subset);
      if (const json* r = g.raw("custom_rig")) {
        Fields h(*r, "custom_rig");
        CameraRig rig;
        h.get("rig_name", rig.rig_name);
        if (const json* cams = h.raw("cameras")) {
          if (!cams->is_array()) throw ConfigError("custom_rig.cameras: expected an array");
          for (const auto& p : *cams) rig.cameras.push_back(pose_from_json(p));
        }
        h.finish();
        rig.validate();
        s.custom_rig = rig;
      }
      g.finish();
      c.clients.push_back(std::move(s));
    }
  }
  f.get("rounds", c.rounds);
  f.get("warmup_rounds", c.warmup_rounds);
  f.get("lr_u", c.lr_u);
  f.get("lr_v", c.lr_v);
  f.get("batch_size", c.batch_size);
  f.get("clients_per_round", c.clients_per_round);
  f.get("topk_retention", c.topk_retention);
  f.get("straggler_ratio", c.straggler_ratio);
  f.get("persistent_stragglers", c.persistent_stragglers);
  f.get("reliable_clients", c.reliable_clients);
  if (const json* b = f.raw("bits_budget"); b && !b->is_null()) {
    try {
      c.bits_budget = b->get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config.bits_budget: ") + e.what());
    }
  }
  f.get("amcm", c.amcm);
  f.get("upload_masked_query", c.upload_masked_query);
  f.get("literal_subset_weights", c.literal_subset_weights);
  f.get("strict_two_pass", c.strict_two_pass);
  f.get("persistent_optimizer", c.persistent_optimizer);
  std::string opt = optimizer_name(c.optimizer);
  f.get("optimizer", opt);
  c.optimizer = optimizer_from_name(opt);
  f.get("scale", c.scale);
  f.get("seed", c.seed);
  f.get("checkpoint_every", c.checkpoint_every);
  if (const json* r = f.raw("rig_options")) {
    Fields g(*r, "config.rig_options");
    g.get("truck_rear_yaw", c.rig_options.truck_rear_yaw);
    g.get("fov_azimuth", c.rig_options.fov_azimuth);
    g.get("n_azimuth_bins", c.rig_options.n_azimuth_bins);
    g.get("n_elevation_bins", c.rig_options.n_elevation_bins);
    g.finish();
  }
  if (const json* w = f.raw("world")) {
    Fields g(*w, "config.world");
    g.get("extent", c.world.extent);
    g.get("min_objects", c.world.min_objects);
    g.get("max_objects", c.world.max_objects);
    g.get("min_radius", c.world.min_radius);
    g.get("max_radius", c.world.max_radius);
    g.finish();
  }
  if (const json* m = f.raw("model")) c.model = model_config_from_json(*m);
  f.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::vector<std::string> preset_names() { return {"uc1", "uc2", "uc3", "uc4", "uc5"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.seed = 1;
  if (name == "uc1") {
    c.clients = {client("bus", 1388), client("truck", 1448), client("car", 6372)};
  } else if (name == "uc2") {
    c.clients = {client("bus", 1388), client("truck", 1448), client("car", 2140), client("car", 1384)};
  } else if (name == "uc3") {
    for (int i = 0; i < 3; ++i) c.clients.push_back(client("bus", 400));
    for (int i = 0; i < 4; ++i) c.clients.push_back(client("truck", 400));
    for (int i = 0; i < 17; ++i) c.clients.push_back(client("car", 400));
    c.rounds = 100;
  } else if (name == "uc4") {
    c.clients = {client("car", 1152, {1}), client("car", 1896, {1, 2, 3}), client("car", 1560, {1, 2, 3, 4})};
  } else if (name == "uc5") {
    const char* rigs[3] = {"car", "bus", "truck"};
    for (int i = 0; i < 58; ++i) c.clients.push_back(client(rigs[i % 3], 300));
    c.rounds = 40;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected uc1, uc2, uc3, uc4 or uc5)");
  }
  return c;
}

std::size_t scaled_points(const ClientSpec& spec, double scale) {
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n_points) * scale));
  return std::max<std::size_t>(5, n);
}

CameraRig client_rig(const ExperimentConfig& config, std::size_t k) {
  const auto& s = config.clients.at(k);
  CameraRig rig = s.rig == "custom" ? *s.custom_rig : rig_from_preset(s.rig, config.rig_options);
  if (!s.camera_subset.empty()) rig = select_cameras(rig, s.camera_subset);
  rig.validate();
  return rig;
}

std::vector<ClientState> build_clients(const ExperimentConfig& config) {
  config.validate();
  DatasetOptions dopt;
  dopt.scene = config.world;
  dopt.bev_h = config.model.bev_h;
  dopt.bev_w = config.model.bev_w;
  std::vector<ClientState> out;
  for (std::size_t k = 0; k < config.clients.size(); ++k) {
    const auto& s = config.clients[k];
    ClientState c;
    c.id = k;
    c.rig = client_rig(config, k);
    c.data = build_client_dataset(c.rig, scaled_points(s, config.scale),
                                  derive_seed(config.seed, {kStreamClientData, k}), dopt);
    c.mask = config.amcm ? amcm_mask(c.rig, config.model.bev_h, config.model.bev_w, config.world.extent)
                         : BevGrid(config.model.bev_h, config.model.bev_w, 1);
    c.local_epochs = s.local_epochs;
    c.batch_size = config.batch_size;
    c.lr_u = config.lr_u;
    c.lr_v = config.lr_v;
    c.weight = static_cast<double>(s.n_points);
    out.push_back(std::move(c));
  }
  return out;
}

FedOptions fed_options(const ExperimentConfig& config, std::size_t threads) {
  FedOptions o;
  o.scheme = config.scheme;
  o.rounds = config.rounds;
  o.warmup_rounds = config.warmup_rounds;
  o.clients_per_round = config.clients_per_round;
  o.topk_retention = config.topk_retention;
  o.aggregation.literal_subset_weights = config.literal_subset_weights;
  o.local.optimizer = config.optimizer;
  o.local.persistent_optimizer = config.persistent_optimizer;
  o.local.strict_two_pass = config.strict_two_pass;
  o.network.straggler_ratio = config.straggler_ratio;
  o.network.persistent = config.persistent_stragglers;
  o.network.reliable_clients = {config.reliable_clients.begin(), config.reliable_clients.end()};
  o.network.bits_budget = config.bits_budget;
  o.upload_masked_query = config.upload_masked_query;
  o.threads = threads;
  o.evaluate = true;
  o.seed = config.seed;
  return o;
}

std::string rounds_csv_row(const RoundRecord& r) {
  std::string s = std::to_string(r.round) + "," + std::to_string(r.client_id) + "," +
                  (r.selected ? "1" : "0") + "," + (r.straggler ? "1" : "0") + ",";
  if (r.train_loss) s += fmt_double(*r.train_loss);
  s += ",";
  if (r.val_iou) s += fmt_double(*r.val_iou);
  s += "," + std::to_string(r.bits_up) + "," + std::to_string(r.bits_down) + "," + std::to_string(r.cum_bits);
  return s;
}

std::string cross_eval_csv(const CrossEvalMatrix& m) {
  std::string s = "testset";
  for (std::size_t j = 0; j < m.n; ++j) s += ",model_" + std::to_string(j);
  s += "\n";
  for (std::size_t i = 0; i < m.n; ++i) {
    s += std::to_string(i);
    for (std::size_t j = 0; j < m.n; ++j) s += "," + fmt_double(m.at(i, j));
    s += "\n";
  }
  return s;
}

json report_to_json(const ExperimentConfig& config, const RunSummary& s) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  json clients = json::array();
  for (const auto& c : s.clients) {
    clients.push_back({{"id", c.id},
                       {"rig", c.rig},
                       {"final_iou", opt(c.final_iou)},
                       {"final_train_loss", opt(c.final_train_loss)},
                       {"rounds_to_target", opt(c.rounds_to_target)}});
  }
  json j = {{"name", config.name},
            {"scheme", scheme_name(config.scheme)},
            {"seed", config.seed},
            {"secure_aggregation", kSecureAggregationMode},
            {"rounds_completed", s.rounds_completed},
            {"budget_stopped", s.budget_stopped},
            {"clients", clients},
            {"mean_final_iou", opt(s.mean_final_iou)},
            {"comm", {{"bits_up", s.bits_up}, {"bits_down", s.bits_down}, {"bits_total", s.bits_up + s.bits_down}}},
            {"grad_norm_slope", opt(s.grad_norm_slope)},
            {"train_loss", s.train_loss},
            {"grad_norm", s.grad_norm}};
  if (s.cross_eval) {
    json rows = json::array();
    for (std::size_t i = 0; i < s.cross_eval->n; ++i) {
      json row = json::array();
      for (std::size_t k = 0; k < s.cross_eval->n; ++k) row.push_back(s.cross_eval->at(i, k));
      rows.push_back(row);
    }
    j["cross_eval"] = rows;
  }
  return j;
}

RunSummary run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out_dir,
                          const RunOptions& options) {
  config.validate();
  FedEngine engine(config.model, fed_options(config, options.threads), build_clients(config));
  std::ofstream csv;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "config.json", config_to_json(config).dump(2) + "\n");
    csv.open(*out_dir / "rounds.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw Error("cannot open " + (*out_dir / "rounds.csv").string());
    csv << kRoundsCsvHeader << "\n";
  }
  const std::size_t K = config.clients.size();
  RunSummary s;
  std::vector<std::vector<double>> iou_series(K);
  std::vector<RoundRecord> last;
  while (!engine.finished()) {
    auto records = engine.run_round();
    double loss = 0.0, norm = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (csv.is_open()) csv << rounds_csv_row(r) << "\n";
      if (r.val_iou) iou_series[r.client_id].push_back(*r.val_iou);
      if (r.train_loss) {
        loss += *r.train_loss;
        norm += *r.grad_norm;
        ++n;
      }
    }
    if (csv.is_open()) csv.flush();
    s.train_loss.push_back(n ? loss / static_cast<double>(n) : std::nan(""));
    s.grad_norm.push_back(n ? norm / static_cast<double>(n) : std::nan(""));
    if (out_dir && options.write_checkpoint && config.checkpoint_every &&
        engine.round() % config.checkpoint_every == 0 && !engine.finished()) {
      save_federated_checkpoint(*out_dir / ("checkpoint_round_" + std::to_string(engine.round()) + ".bin"),
                                config, engine);
    }
    if (options.on_round) options.on_round(engine, records);
    last = std::move(records);
  }
  s.rounds_completed = engine.round();
  s.budget_stopped = engine.round() < config.rounds;
  s.bits_up = engine.ledger().total_up();
  s.bits_down = engine.ledger().total_down();
  double iou_sum = 0.0;
  std::size_t iou_n = 0;
  for (std::size_t k = 0; k < K; ++k) {
    ClientSummary c;
    c.id = k;
    c.rig = config.clients[k].rig;
    c.final_iou = last[k].val_iou;
    c.final_train_loss = last[k].train_loss;
    if (!iou_series[k].empty()) c.rounds_to_target = rounds_to_target(iou_series[k]);
    if (c.final_iou) {
      iou_sum += *c.final_iou;
      ++iou_n;
    }
    s.clients.push_back(std::move(c));
  }
  if (iou_n) s.mean_final_iou = iou_sum / static_cast<double>(iou_n);
  const std::size_t warm = std::min(config.warmup_rounds, s.grad_norm.size());
  bool finite_window = true;
  for (std::size_t t = warm; t < s.grad_norm.size(); ++t) finite_window &= s.grad_norm[t] > 0.0;
  if (s.grad_norm.size() >= 20 && s.grad_norm.size() - warm >= 2 && finite_window) {
    s.grad_norm_slope = convergence_diagnostic(s.grad_norm, warm);
  }
  bool all_have_test = K >= 2;
  for (const auto& c : engine.clients()) all_have_test &= !c.data.test.empty();
  if (all_have_test) s.cross_eval = cross_evaluate(engine);
  if (out_dir) {
    write_text(*out_dir / "report.json", report_to_json(config, s).dump(2) + "\n");
    if (s.cross_eval) write_text(*out_dir / "cross_eval.csv", cross_eval_csv(*s.cross_eval));
    if (options.write_checkpoint) save_federated_checkpoint(*out_dir / "checkpoint.bin", config, engine);
  }
  return s;
}

ExperimentConfig apply_axis(ExperimentConfig config, const std::string& axis, double value) {
  auto as_count = [&](const char* what) {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw ConfigError(std::string("sweep: ") + what + " needs a positive integer, got " + fmt_double(value));
    }
    return static_cast<std::size_t>(value);
  };
  if (axis == "local_epochs") {
    const auto e = as_count("local_epochs");
    for (auto& c : config.clients) c.local_epochs = e;
  } else if (axis == "topk_retention") {
    config.topk_retention = value;
  } else if (axis == "straggler_ratio") {
    config.straggler_ratio = value;
  } else if (axis == "clients_per_round") {
    config.clients_per_round = as_count("clients_per_round");
  } else {
    throw ConfigError("sweep: unknown axis '" + axis +
                      "' (expected local_epochs, topk_retention, straggler_ratio or clients_per_round)");
  }
  config.validate();
  return config;
}

std::vector<RunSummary> sweep(const ExperimentConfig& config, const std::string& axis,
                              const std::vector<double>& values, const std::filesystem::path& out_dir,
                              const RunOptions& options) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<ExperimentConfig> runs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto c = apply_axis(config, axis, values[i]);
    c.seed = derive_seed(config.seed, {kStreamSweep, i});
    runs.push_back(std::move(c));
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "summary.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw Error("cannot open " + (out_dir / "summary.csv").string());
  csv << "index,axis,value,seed,rounds_completed,bits_total,mean_final_iou\n";
  std::vector<RunSummary> out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto s = run_experiment(runs[i], out_dir / ("run_" + std::to_string(i)), options);
    csv << i << "," << axis << "," << fmt_double(values[i]) << "," << runs[i].seed << "," << s.rounds_completed
        << "," << (s.bits_up + s.bits_down) << "," << (s.mean_final_iou ? fmt_double(*s.mean_final_iou) : "")
        << "\n";
    csv.flush();
    out.push_back(std::move(s));
  }
  return out;
}

void save_federated_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config,
                               const FedEngine& engine) {
  const auto& split = engine.split();
  ToyBevt probe(engine.model_config());
  json h = {{"format", "bevfl-federated"},
            {"version", 1},
            {"experiment", config_to_json(config)},
            {"config", model_config_to_json(engine.model_config())},
            {"segments", segment_table(probe.params())},
            {"seed", config.seed},
            {"round", engine.round()},
            {"scheme", scheme_name(engine.policy().scheme)},
            {"public_size", split.public_size},
            {"private_size", split.private_size},
            {"n_clients", engine.clients().size()}};
  std::vector<double> payload = engine.public_params();
  for (const auto& c : engine.clients())
    payload.insert(payload.end(), c.private_params.begin(), c.private_params.end());
  write_checkpoint(path, h, payload);
}

RestoredRun load_federated_checkpoint(const std::filesystem::path& path, std::size_t threads) {
  auto ck = read_checkpoint(path);
  try {
    if (ck.header.at("format") != "bevfl-federated") throw Error("checkpoint: not a federated checkpoint");
    RestoredRun r;
    r.config = config_from_json(ck.header.at("experiment"));
    r.engine = std::make_unique<FedEngine>(r.config.model, fed_options(r.config, threads), build_clients(r.config));
    const auto& split = r.engine->split();
    const std::size_t K = r.engine->clients().size();
    if (ck.header.at("public_size") != split.public_size || ck.header.at("private_size") != split.private_size ||
        ck.payload.size() != split.public_size + K * split.private_size) {
      throw Error("checkpoint: payload layout does not match the experiment");
    }
    std::vector<double> u(ck.payload.begin(), ck.payload.begin() + static_cast<std::ptrdiff_t>(split.public_size));
    std::vector<std::vector<double>> v(K);
    auto it = ck.payload.begin() + static_cast<std::ptrdiff_t>(split.public_size);
    for (auto& vk : v) {
      vk.assign(it, it + static_cast<std::ptrdiff_t>(split.private_size));
      it += static_cast<std::ptrdiff_t>(split.private_size);
    }
    r.engine->restore(ck.header.at("round"), std::move(u), std::move(v));
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
}

}  // namespace bevfl
