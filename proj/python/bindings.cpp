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
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bevfl/amcm.hpp"
#include "bevfl/errors.hpp"
#include "bevfl/experiment.hpp"
#include "bevfl/fed.hpp"
#include "bevfl/metrics.hpp"

namespace py = pybind11;
using namespace bevfl;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::array_t<std::uint8_t> grid_array(const BevGrid& g) {
  py::array_t<std::uint8_t> out({g.h(), g.w()});
  std::copy(g.cells().begin(), g.cells().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_bevfl, m) {
  m.doc() = "Camera-aware personalized federated BEV training at desk scale";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<EmptySupportError>(m, "EmptySupportError", base.ptr());
  py::register_exception<NonFiniteError>(m, "NonFiniteError", base.ptr());

  m.def("preset_names", &preset_names);
  m.def("preset", [](const std::string& name) { return to_py(config_to_json(preset(name))); }, py::arg("name"),
        "Experiment preset as a config dict.");
  m.def("validate_config", [](const py::object& cfg) { return to_py(config_to_json(config_from_json(from_py(cfg)))); },
        py::arg("config"), "Parses and validates a config dict; returns it with defaults filled in.");

  m.def(
      "run",
      [](const py::object& cfg, std::optional<std::filesystem::path> out_dir, std::size_t threads) {
        const auto config = config_from_json(from_py(cfg));
        RunOptions opts;
        opts.threads = threads;
        opts.write_checkpoint = out_dir.has_value();
        RunSummary summary;
        {
          py::gil_scoped_release release;
          summary = run_experiment(config, out_dir, opts);
        }
        return to_py(report_to_json(config, summary));
      },
      py::arg("config"), py::arg("out_dir") = py::none(), py::arg("threads") = 1,
      "Runs an experiment and returns its report dict.");

  m.def(
      "amcm_mask",
      [](const std::string& rig, std::vector<std::size_t> cameras, std::size_t h, std::size_t w, double extent) {
        auto r = rig_from_preset(rig);
        if (!cameras.empty()) r = select_cameras(r, cameras);
        return grid_array(amcm_mask(r, h, w, extent));
      },
      py::arg("rig"), py::arg("cameras") = std::vector<std::size_t>{}, py::arg("h") = 16, py::arg("w") = 16,
      py::arg("extent") = 16.0, "Active-cell mask of a preset rig (cameras are 1-based).");

  m.def(
      "compress_topk",
      [](std::vector<double> v, double retention) {
        const auto d = compress_topk(Delta::from_dense(std::move(v)), retention);
        std::vector<std::uint32_t> idx = d.indices;
        if (!d.sparse) {
          idx.resize(d.dense.size());
          for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
        }
        return py::make_tuple(idx, d.sparse ? d.values : d.dense, d.bits_upload);
      },
      py::arg("values"), py::arg("retention"), "Returns (indices, values, bits).");

  m.def(
      "aggregate",
      [](const std::vector<double>& u, const std::vector<std::vector<double>>& deltas,
         const std::vector<double>& weights) {
        if (deltas.size() != weights.size()) throw ConfigError("aggregate: deltas and weights differ in length");
        std::vector<WeightedDelta> ds;
        for (std::size_t k = 0; k < deltas.size(); ++k) ds.push_back({k, Delta::from_dense(deltas[k]), weights[k]});
        return aggregate(std::move(ds), u);
      },
      py::arg("u"), py::arg("deltas"), py::arg("weights"));

  m.def("lr_schedule", &lr_schedule, py::arg("t"), py::arg("base_lr"), py::arg("warmup"), py::arg("total"));
  m.def(
      "convergence_diagnostic",
      [](const std::vector<double>& s, std::size_t skip) { return convergence_diagnostic(s, skip); },
      py::arg("series"), py::arg("skip") = 0);
  m.def(
      "rounds_to_target", [](const std::vector<double>& s, double f) { return rounds_to_target(s, f); },
      py::arg("series"), py::arg("fraction") = 0.95);

  m.attr("ROUNDS_CSV_HEADER") = kRoundsCsvHeader;
  m.attr("SECURE_AGGREGATION") = kSecureAggregationMode;
}
