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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bevfl/errors.hpp"
#include "bevfl/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void init_logging() {
  auto logger = spdlog::stderr_color_mt("bevfl");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  const char* level = std::getenv("BEVFL_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

bevfl::RunOptions run_options(std::size_t threads) {
  bevfl::RunOptions o;
  o.threads = threads;
  o.on_round = [](const bevfl::FedEngine& engine, const std::vector<bevfl::RoundRecord>& records) {
    double iou = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (r.val_iou) {
        iou += *r.val_iou;
        ++n;
      }
    }
    spdlog::debug("round {}/{}: mean val IoU {:.4f}, cumulative bits {}", engine.round(),
                  engine.options().rounds, n ? iou / static_cast<double>(n) : 0.0, engine.ledger().total());
  };
  return o;
}

bevfl::ExperimentConfig resolve_config(const std::string& path, const std::string& preset_name,
                                       std::optional<std::uint64_t> seed, std::optional<double> scale) {
  auto config = preset_name.empty() ? bevfl::load_config(path) : bevfl::preset(preset_name);
  if (seed) config.seed = *seed;
  if (scale) config.scale = *scale;
  config.validate();
  return config;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (item.empty() || used != item.size()) throw bevfl::ConfigError("sweep: bad value '" + item + "'");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

void log_summary(const bevfl::RunSummary& s) {
  for (const auto& c : s.clients) {
    spdlog::info("client {} ({}): final IoU {}", c.id, c.rig,
                 c.final_iou ? std::to_string(*c.final_iou) : std::string("n/a"));
  }
  spdlog::info("{} rounds, {} bits total", s.rounds_completed, s.bits_up + s.bits_down);
}

void write_datasets(const bevfl::ExperimentConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto clients = bevfl::build_clients(config);
  for (const auto& c : clients) {
    const auto path = dir / ("client_" + std::to_string(c.id) + ".json");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!(out << bevfl::dataset_to_json(c.data) << "\n")) throw bevfl::Error("cannot write " + path.string());
  }
  spdlog::info("wrote {} dataset files to {}", clients.size(), dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Federated BEV personalization simulator"};
  app.require_subcommand(1);

  std::string config_path, preset_name, out_dir, axis, values, checkpoint, emit;
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  std::size_t threads = 1;
  bool dump_datasets = false;

  auto* run = app.add_subcommand("run", "Run one experiment");
  auto* run_src = run->add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  run->add_option("--preset", preset_name, "Use a named preset instead of --config")->excludes(run_src);
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--scale", scale, "Data points generated per nominal client size");
  run->add_option("--threads", threads, "Concurrent client updates")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_flag("--dump-datasets", dump_datasets, "Also write each client's scenes and rig as JSON");

  auto* pre = app.add_subcommand("preset", "Print or write a preset config");
  pre->add_option("name", preset_name, "uc1, uc2, uc3, uc4 or uc5")->required();
  pre->add_option("--emit", emit, "Write to this path instead of stdout");

  auto* sw = app.add_subcommand("sweep", "Run one experiment per axis value");
  auto* sw_src = sw->add_option("--config", config_path, "Base config (JSON)")->check(CLI::ExistingFile);
  sw->add_option("--preset", preset_name, "Use a named preset instead of --config")->excludes(sw_src);
  sw->add_option("--axis", axis, "local_epochs, topk_retention, straggler_ratio or clients_per_round")->required();
  sw->add_option("--values", values, "Comma-separated values")->required();
  sw->add_option("--seed", seed, "Override the master seed");
  sw->add_option("--scale", scale, "Data points generated per nominal client size");
  sw->add_option("--threads", threads, "Concurrent client updates")->check(CLI::PositiveNumber);
  sw->add_option("--out", out_dir, "Output directory")->required();

  auto* ce = app.add_subcommand("cross-eval", "Cross-evaluate personalized models from a checkpoint");
  ce->add_option("--checkpoint", checkpoint, "Federated checkpoint")->required()->check(CLI::ExistingFile);
  ce->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (config_path.empty() && preset_name.empty()) throw bevfl::ConfigError("run: --config or --preset is required");
      const auto config = resolve_config(config_path, preset_name, seed, scale);
      spdlog::info("running '{}' ({}, {} clients, {} rounds) into {}", config.name, bevfl::scheme_name(config.scheme),
                   config.clients.size(), config.rounds, out_dir);
      if (dump_datasets) write_datasets(config, std::filesystem::path(out_dir) / "datasets");
      log_summary(bevfl::run_experiment(config, out_dir, run_options(threads)));
    } else if (*pre) {
      const std::string text = bevfl::config_to_json(bevfl::preset(preset_name)).dump(2) + "\n";
      if (emit.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(emit, std::ios::binary | std::ios::trunc);
        if (!(out << text)) throw bevfl::Error("cannot write " + emit);
      }
    } else if (*sw) {
      if (config_path.empty() && preset_name.empty()) throw bevfl::ConfigError("sweep: --config or --preset is required");
      const auto config = resolve_config(config_path, preset_name, seed, scale);
      const auto runs = bevfl::sweep(config, axis, parse_values(values), out_dir, run_options(threads));
      spdlog::info("sweep over {} finished: {} runs, summary in {}/summary.csv", axis, runs.size(), out_dir);
    } else if (*ce) {
      auto restored = bevfl::load_federated_checkpoint(checkpoint);
      const auto m = bevfl::cross_evaluate(*restored.engine);
      std::filesystem::create_directories(out_dir);
      std::ofstream out(std::filesystem::path(out_dir) / "cross_eval.csv", std::ios::binary | std::ios::trunc);
      if (!(out << bevfl::cross_eval_csv(m))) throw bevfl::Error("cannot write cross_eval.csv");
      spdlog::info("diagonal is the row maximum in {} of {} rows", m.diagonal_row_max_count(), m.n);
    }
  } catch (const bevfl::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
