// Copyright (c) 2026 The defsdf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// One JSON document configures every pipeline stage. Unknown keys and type
// mismatches are rejected with the offending dotted path.

#include "defsdf/datagen.hpp"
#include "defsdf/inference.hpp"
#include "defsdf/metrics.hpp"
#include "defsdf/training.hpp"

#include <string>
#include <vector>

namespace defsdf {

struct DataConfig {
  std::string dir = "data";
  std::vector<ToolSpec> tools = {ToolSpec{}};
  int conditions_per_tool = 6;
  DatasetOptions options;
};

struct ReconConfig {
  int resolution = 128;
  unsigned threads = 0;  // 0 uses every hardware thread
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string run_dir = "runs/default";
  DataConfig data;
  TrainConfig train;
  InferenceOptions infer;
  ReconConfig recon;
  EvalOptions eval;
};

inline io::Json to_json(const DatasetOptions& o) {
  return {{"surface_density", o.surface_density},
          {"sdf_samples", o.sdf_samples},
          {"near_fraction", o.sampling.near_fraction},
          {"surface_fraction", o.sampling.surface_fraction},
          {"sigma_near", o.sampling.sigma_near},
          {"contact_radius", o.contact_radius},
          {"min_force", o.min_force},
          {"max_force", o.max_force},
          {"min_load_station", o.min_load_station},
          {"holdout_per_tool", o.holdout_per_tool}};
}

inline io::Json to_json(const RunConfig& c) {
  io::Json tools = io::Json::array();
  for (const auto& t : c.data.tools) tools.push_back(to_json(t));
  return {{"seed", c.seed},
          {"run_dir", c.run_dir},
          {"data",
           {{"dir", c.data.dir},
            {"tools", tools},
            {"conditions_per_tool", c.data.conditions_per_tool},
            {"options", to_json(c.data.options)}}},
          {"train", to_json(c.train)},
          {"infer",
           {{"iterations", c.infer.iterations},
            {"lr", c.infer.lr},
            {"restarts", c.infer.restarts},
            {"init_std", c.infer.init_std},
            {"max_backtracks", c.infer.max_backtracks},
            {"ray_offset", c.infer.ray_offset},
            {"recon_resolution", c.infer.recon_resolution},
            {"recon_points", c.infer.recon_points}}},
          {"recon", {{"resolution", c.recon.resolution}, {"threads", c.recon.threads}}},
          {"eval",
           {{"split", c.eval.split},
            {"resolution", c.eval.resolution},
            {"recon_points", c.eval.recon_points},
            {"gt_points", c.eval.gt_points},
            {"scale", c.eval.scale}}}};
}

namespace detail {

inline const char* json_kind(const io::Json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "array";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  return "null";
}

/// Checks `j` against the shape of `schema` (a defaults document).
inline void check_schema(const io::Json& j, const io::Json& schema, const std::string& path) {
  const std::string where = path.empty() ? "<root>" : path;
  if (schema.is_object()) {
    require(j.is_object(), ErrorKind::kConfig, where + ": expected an object, got " + json_kind(j));
    for (const auto& [key, value] : j.items()) {
      const std::string sub = path.empty() ? key : path + "." + key;
      require(schema.contains(key), ErrorKind::kConfig, sub + ": unknown field");
      check_schema(value, schema.at(key), sub);
    }
  } else if (schema.is_array()) {
    require(j.is_array(), ErrorKind::kConfig, where + ": expected an array, got " + json_kind(j));
    if (!schema.empty())
      for (std::size_t i = 0; i < j.size(); ++i)
        check_schema(j[i], schema[0], path + "[" + std::to_string(i) + "]");
  } else if (schema.is_number()) {
    require(j.is_number(), ErrorKind::kConfig, where + ": expected a number, got " + json_kind(j));
    if (schema.is_number_integer())
      require(j.is_number_integer(), ErrorKind::kConfig, where + ": expected an integer");
    if (schema.is_number_unsigned())
      require(j.is_number_unsigned(), ErrorKind::kConfig, where + ": expected a non-negative integer");
  } else {
    require(std::string(json_kind(j)) == json_kind(schema), ErrorKind::kConfig,
            where + ": expected a " + json_kind(schema) + ", got " + json_kind(j));
  }
}

}  // namespace detail

/// Every accepted field with its default value.
inline io::Json config_schema() { return to_json(RunConfig{}); }

inline RunConfig run_config_from_json(const io::Json& j) {
  detail::check_schema(j, config_schema(), "");
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  c.run_dir = j.value("run_dir", c.run_dir);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.data.dir = d.value("dir", c.data.dir);
    if (d.contains("tools")) {
      c.data.tools.clear();
      for (const auto& t : d.at("tools")) c.data.tools.push_back(tool_spec_from_json(t));
    }
    c.data.conditions_per_tool = d.value("conditions_per_tool", c.data.conditions_per_tool);
    if (d.contains("options")) {
      const auto& o = d.at("options");
      auto& opt = c.data.options;
      opt.surface_density = o.value("surface_density", opt.surface_density);
      opt.sdf_samples = o.value("sdf_samples", opt.sdf_samples);
      opt.sampling.near_fraction = o.value("near_fraction", opt.sampling.near_fraction);
      opt.sampling.surface_fraction = o.value("surface_fraction", opt.sampling.surface_fraction);
      opt.sampling.sigma_near = o.value("sigma_near", opt.sampling.sigma_near);
      opt.contact_radius = o.value("contact_radius", opt.contact_radius);
      opt.min_force = o.value("min_force", opt.min_force);
      opt.max_force = o.value("max_force", opt.max_force);
      opt.min_load_station = o.value("min_load_station", opt.min_load_station);
      opt.holdout_per_tool = o.value("holdout_per_tool", opt.holdout_per_tool);
    }
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (!j.contains("train") || !j.at("train").contains("seed")) c.train.seed = c.seed;
  if (j.contains("infer")) {
    const auto& i = j.at("infer");
    c.infer.iterations = i.value("iterations", c.infer.iterations);
    c.infer.lr = i.value("lr", c.infer.lr);
    c.infer.restarts = i.value("restarts", c.infer.restarts);
    c.infer.init_std = i.value("init_std", c.infer.init_std);
    c.infer.max_backtracks = i.value("max_backtracks", c.infer.max_backtracks);
    c.infer.ray_offset = i.value("ray_offset", c.infer.ray_offset);
    c.infer.recon_resolution = i.value("recon_resolution", c.infer.recon_resolution);
    c.infer.recon_points = i.value("recon_points", c.infer.recon_points);
  }
  c.infer.seed = c.seed;
  if (j.contains("recon")) {
    const auto& r = j.at("recon");
    c.recon.resolution = r.value("resolution", c.recon.resolution);
    c.recon.threads = r.value("threads", c.recon.threads);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.split = e.value("split", c.eval.split);
    c.eval.resolution = e.value("resolution", c.eval.resolution);
    c.eval.recon_points = e.value("recon_points", c.eval.recon_points);
    c.eval.gt_points = e.value("gt_points", c.eval.gt_points);
    c.eval.scale = e.value("scale", c.eval.scale);
  }
  c.eval.seed = c.seed;
  c.infer.threads = c.eval.threads = c.recon.threads;

  require(!c.data.tools.empty(), ErrorKind::kConfig, "data.tools: at least one tool is required");
  for (std::size_t t = 0; t < c.data.tools.size(); ++t) {
    try {
      validate(c.data.tools[t]);
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, "data.tools[" + std::to_string(t) + "]: " + e.what());
    }
  }
  require(c.data.conditions_per_tool >= 1, ErrorKind::kConfig,
          "data.conditions_per_tool: must be at least 1");
  require(c.data.options.holdout_per_tool >= 0 &&
              c.data.options.holdout_per_tool < c.data.conditions_per_tool,
          ErrorKind::kConfig, "data.options.holdout_per_tool: must be below conditions_per_tool");
  try {
    validate(c.train);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("train: ") + e.what());
  }
  require(c.recon.resolution >= 2 && c.eval.resolution >= 2, ErrorKind::kConfig,
          "recon.resolution and eval.resolution must be at least 2");
  require(c.infer.iterations >= 0 && c.infer.restarts >= 1 && c.infer.lr > 0, ErrorKind::kConfig,
          "infer: iterations >= 0, restarts >= 1 and lr > 0 are required");
  return c;
}

/// Applies "a.b.c=value" overrides; the value is parsed as JSON and taken as
/// a plain string when that fails. Array elements are addressed by index.
inline void apply_override(io::Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::kConfig,
          "override '" + assignment + "' is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  io::Json value = io::Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  io::Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!key.empty(), ErrorKind::kConfig, "override path '" + path + "' has an empty component");
    io::Json* next = nullptr;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        fail(ErrorKind::kConfig, "override path '" + path + "': '" + key + "' is not an array index");
      }
      require(idx < node->size(), ErrorKind::kConfig, "override path '" + path + "': index out of range");
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = io::Json::object();
      require(node->is_object(), ErrorKind::kConfig, "override path '" + path + "' descends into a scalar");
      next = &(*node)[key];
    }
    if (dot == std::string::npos) {
      *next = value;
      return;
    }
    node = next;
    start = dot + 1;
  }
}

/// Reads a config file and applies overrides; the merged document is validated.
inline std::pair<RunConfig, io::Json> load_run_config(const io::fs::path& path,
                                                      const std::vector<std::string>& overrides = {}) {
  require(io::fs::exists(path), ErrorKind::kConfig, "config file not found: " + path.string());
  io::Json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return {run_config_from_json(j), j};
}

}  // namespace defsdf
