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

// Command-line front end: gen-data, pretrain, train, infer, recon, interp,
// xsection, correspond, eval.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include "defsdf/defsdf.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef DEFSDF_VERSION
#define DEFSDF_VERSION "unknown"
#endif

namespace {

using defsdf::ErrorKind;
using defsdf::io::Json;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kNumerical: return kExitNumerical;
    default: return kExitData;
  }
}

struct Context {
  std::string config_path;
  std::vector<std::string> overrides;
  defsdf::RunConfig config;
  Json merged;
  fs::path run_dir, data_dir;

  void load() {
    if (config_path.empty()) {
      merged = Json::object();
      for (const auto& o : overrides) defsdf::apply_override(merged, o);
      config = defsdf::run_config_from_json(merged);
    } else {
      std::tie(config, merged) = defsdf::load_run_config(config_path, overrides);
    }
    const char* root = std::getenv("DEFSDF_OUTPUT_ROOT");
    auto rooted = [root](const fs::path& p) {
      return root && *root && p.is_relative() ? fs::path(root) / p : p;
    };
    run_dir = rooted(config.run_dir);
    data_dir = rooted(config.data.dir);
  }

  unsigned threads() const { return defsdf::resolve_threads(config.recon.threads); }

  fs::path existing(const fs::path& p, const std::string& what) const {
    defsdf::require(fs::exists(p), ErrorKind::kIo, what + " not found: " + p.string());
    return p;
  }

  defsdf::FieldModel model(const std::string& checkpoint, const std::string& fallback) const {
    const fs::path p = checkpoint.empty() ? run_dir / fallback : fs::path(checkpoint);
    return defsdf::load_model(existing(p, "checkpoint"));
  }

  defsdf::Dataset dataset() const {
    existing(data_dir / "manifest.json", "dataset manifest");
    return defsdf::load_dataset(data_dir);
  }

  /// Writes <run_dir>/manifests/<name>.json describing this invocation.
  void write_manifest(const std::string& name, const Json& outputs) const {
    const std::string canonical = defsdf::to_json(config).dump();
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(defsdf::fnv1a(canonical)));
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    Json m = {{"subcommand", name},
              {"version", DEFSDF_VERSION},
              {"config_hash", hash},
              {"seed", config.seed},
              {"config_path", config_path},
              {"overrides", overrides},
              {"config", defsdf::to_json(config)},
              {"outputs", outputs},
              {"timestamp", stamp}};
    defsdf::io::ensure_directory(run_dir / "manifests");
    defsdf::io::write_json(run_dir / "manifests" / (name + ".json"), m);
  }
};

const defsdf::DeformationRecord& find_record(const defsdf::Dataset& ds, const std::string& tool,
                                             int condition) {
  for (const auto& d : ds.deformations)
    if (d.tool_id == tool && d.condition == condition) return d;
  defsdf::fail(ErrorKind::kInvalidInput,
               "no deformation record for tool " + tool + ", condition " + std::to_string(condition));
}

int tool_index(const defsdf::FieldModel& m, const std::string& tool) {
  const int i = m.object_index(tool);
  defsdf::require(i >= 0, ErrorKind::kInvalidInput, "tool " + tool + " is not in the model");
  return i;
}

/// Force code of a record: the stored code for training records, the
/// encoder output for anything else.
defsdf::ForceCode code_for(const defsdf::FieldModel& m, const defsdf::Dataset& ds,
                           const std::string& tool, int condition) {
  defsdf::require(m.deformation_trained, ErrorKind::kInvalidState,
                  "the checkpoint has no trained deformation network");
  const int k = m.force_index(tool, condition);
  if (k >= 0) return m.force_code(k);
  return defsdf::encode_force(m, find_record(ds, tool, condition).contacts).z;
}

std::string record_name(const std::string& tool, int condition) {
  return condition < 0 ? tool + "_nominal" : tool + "_c" + std::to_string(condition);
}

void write_mesh(const fs::path& base, const defsdf::TriangleMesh& mesh) {
  defsdf::io::write_obj(fs::path(base).replace_extension(".obj"), mesh);
  defsdf::io::write_ply(fs::path(base).replace_extension(".ply"), mesh);
}

std::string schema_listing() {
  std::ostringstream out;
  out << "Config fields (dotted path = default); override with --set path=value:\n";
  std::function<void(const Json&, const std::string&)> walk = [&](const Json& j, const std::string& p) {
    if (j.is_object()) {
      for (const auto& [k, v] : j.items()) walk(v, p.empty() ? k : p + "." + k);
    } else if (j.is_array() && !j.empty() && j[0].is_object()) {
      walk(j[0], p + ".<i>");
    } else {
      out << "  " << p << " = " << j.dump() << '\n';
    }
  };
  walk(defsdf::config_schema(), "");
  out << "Environment: DEFSDF_OUTPUT_ROOT prefixes relative run_dir and data.dir.\n"
      << "Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.\n";
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"defsdf: deformable implicit object fields from contact observations"};
  app.set_version_flag("--version", std::string(DEFSDF_VERSION));
  app.require_subcommand(1);
  app.footer(schema_listing());

  Context ctx;
  auto common = [&ctx](CLI::App* sub) {
    sub->add_option("-c,--config", ctx.config_path, "JSON config file");
    sub->add_option("--set", ctx.overrides, "Override a config field, e.g. train.deform_epochs=100");
  };

  std::string checkpoint, tool;
  int condition = -1, to_condition = -1, resolution = 0, axis = 1, n_marked = 512;
  double offset = 0.0;
  bool known_force = false, partial = false, csv = false;
  std::vector<double> ts = {0.0, 0.25, 0.5, 0.75, 1.0};

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic tool dataset");
  common(gen);
  auto* pre = app.add_subcommand("pretrain", "Fit the shape network to the nominal records");
  common(pre);
  auto* trn = app.add_subcommand("train", "Train the deformation network and force encoder");
  common(trn);
  trn->add_option("--checkpoint", checkpoint, "Pretrained checkpoint (default run_dir/pretrained.ckpt)");

  auto* inf = app.add_subcommand("infer", "Recover a deformation from a partial observation");
  common(inf);
  inf->add_option("--checkpoint", checkpoint, "Checkpoint (default run_dir/model.ckpt)");
  inf->add_option("--tool", tool, "Tool id")->required();
  inf->add_option("--condition", condition, "Dataset condition providing the observation")->required();
  inf->add_flag("--partial", partial, "Observe a synthetic single view with handle and tip removed");
  inf->add_flag("--known-force", known_force, "Hold the recorded reaction force fixed");

  auto* rec = app.add_subcommand("recon", "Reconstruct a mesh from stored codes");
  common(rec);
  rec->add_option("--checkpoint", checkpoint, "Checkpoint (default run_dir/model.ckpt)");
  rec->add_option("--tool", tool, "Tool id")->required();
  rec->add_option("--condition", condition, "Condition; -1 reconstructs the nominal shape");
  rec->add_option("--resolution", resolution, "Grid resolution (default recon.resolution)");

  auto* itp = app.add_subcommand("interp", "Reconstruct along a line between two force codes");
  common(itp);
  itp->add_option("--checkpoint", checkpoint, "Checkpoint (default run_dir/model.ckpt)");
  itp->add_option("--tool", tool, "Tool id")->required();
  itp->add_option("--from", condition, "Left condition")->required();
  itp->add_option("--to", to_condition, "Right condition")->required();
  itp->add_option("--ts", ts, "Interpolation parameters");
  itp->add_option("--resolution", resolution, "Grid resolution (default recon.resolution)");

  auto* xs = app.add_subcommand("xsection", "Export planar slices of the fields");
  common(xs);
  xs->add_option("--checkpoint", checkpoint, "Checkpoint (default run_dir/model.ckpt)");
  xs->add_option("--tool", tool, "Tool id")->required();
  xs->add_option("--condition", condition, "Condition")->required();
  xs->add_option("--axis", axis, "Plane normal axis: 0, 1 or 2");
  xs->add_option("--offset", offset, "Plane offset in normalized units");
  xs->add_option("--resolution", resolution, "Nodes per side (default recon.resolution)");
  xs->add_flag("--csv", csv, "Also write CSV files");

  auto* cor = app.add_subcommand("correspond", "Track marked surface points between two conditions");
  common(cor);
  cor->add_option("--checkpoint", checkpoint, "Checkpoint (default run_dir/model.ckpt)");
  cor->add_option("--tool", tool, "Tool id")->required();
  cor->add_option("--from", condition, "Condition whose surface carries the marks")->required();
  cor->add_option("--to", to_condition, "Target condition")->required();
  cor->add_option("--points", n_marked, "Number of marked points drawn from the source cloud");

  auto* ev = app.add_subcommand("eval", "Reconstruction accuracy table");
  common(ev);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default run_dir/model.ckpt)");
  ev->add_option("--resolution", resolution, "Grid resolution (default eval.resolution)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    ctx.load();
    const auto& cfg = ctx.config;

    if (*gen) {
      const Json manifest = defsdf::generate_dataset(cfg.data.tools, cfg.data.conditions_per_tool,
                                                     cfg.seed, ctx.data_dir, cfg.data.options);
      std::cout << "wrote " << manifest.at("records").size() << " records to " << ctx.data_dir.string()
                << '\n';
      ctx.write_manifest("gen-data", {{"dataset", ctx.data_dir.string()},
                                      {"records", manifest.at("records").size()}});
    } else if (*pre) {
      const auto ds = ctx.dataset();
      defsdf::io::ensure_directory(ctx.run_dir);
      std::ofstream log(ctx.run_dir / "pretrain_log.ndjson");
      auto st = defsdf::pretrain_nominal(ds, cfg.train, &log);
      const fs::path out = ctx.run_dir / "pretrained.ckpt";
      defsdf::save_model(st.model, out, {{"stage", "pretrain"}, {"version", DEFSDF_VERSION}});
      std::cout << "final " << st.history.back().dump() << "\nwrote " << out.string() << '\n';
      ctx.write_manifest("pretrain", {{"checkpoint", out.string()},
                                      {"log", (ctx.run_dir / "pretrain_log.ndjson").string()}});
    } else if (*trn) {
      const auto ds = ctx.dataset();
      defsdf::TrainState st;
      st.model = ctx.model(checkpoint, "pretrained.ckpt");
      st.seed = cfg.train.seed;
      std::ofstream log(ctx.run_dir / "train_log.ndjson");
      st = defsdf::train_deformed(std::move(st), ds, cfg.train, &log);
      const fs::path out = ctx.run_dir / "model.ckpt";
      defsdf::save_model(st.model, out, {{"stage", "train"}, {"version", DEFSDF_VERSION}});
      std::cout << "final " << st.history.back().dump() << "\nwrote " << out.string() << '\n';
      ctx.write_manifest("train", {{"checkpoint", out.string()},
                                   {"log", (ctx.run_dir / "train_log.ndjson").string()}});
    } else if (*inf) {
      const auto ds = ctx.dataset();
      const auto model = ctx.model(checkpoint, "model.ckpt");
      const auto& rec_d = find_record(ds, tool, condition);
      defsdf::PartialObservation obs;
      obs.alpha = model.object_code(tool_index(model, tool));
      obs.visible_points = partial ? defsdf::synthetic_partial_view(rec_d.deformed_cloud)
                                   : rec_d.deformed_cloud;
      obs.camera = defsdf::PinholeView{}.camera;
      if (known_force) obs.known_u = rec_d.contacts.reaction;
      auto opt = cfg.infer;
      opt.threads = ctx.threads();
      if (opt.recon_resolution == 0) opt.recon_resolution = cfg.recon.resolution;
      const auto res = defsdf::infer_deformation(model, obs, opt, cfg.train.weights.delta);
      const fs::path dir = ctx.run_dir / "infer" / record_name(tool, condition);
      defsdf::io::ensure_directory(dir);
      defsdf::io::write_ply(dir / "observed.ply", obs.visible_points);
      Json out = {{"tool", tool},
                  {"condition", condition},
                  {"partial", partial},
                  {"known_force", known_force},
                  {"visible_points", obs.visible_points.size()},
                  {"restart", res.restart},
                  {"diverged", res.diverged},
                  {"u", {res.u.x(), res.u.y(), res.u.z()}},
                  {"z", std::vector<float>(res.z.data(), res.z.data() + res.z.size())},
                  {"contact_feature", std::vector<float>(res.contact_feature.data(),
                                                         res.contact_feature.data() + res.contact_feature.size())},
                  {"loss_trajectory", res.loss_trajectory}};
      if (res.reconstructed_mesh) {
        write_mesh(dir / "reconstruction", *res.reconstructed_mesh);
        out["cd"] = defsdf::chamfer(res.reconstructed_cloud, rec_d.deformed_cloud);
        out["mesh"] = (dir / "reconstruction.obj").string();
      }
      defsdf::io::write_json(dir / "result.json", out);
      std::cout << "loss " << res.loss_trajectory.front() << " -> " << res.loss_trajectory.back();
      if (out.contains("cd")) std::cout << ", CD " << out["cd"].get<double>();
      std::cout << "\nwrote " << (dir / "result.json").string() << '\n';
      if (res.diverged) std::cerr << "warning: inference diverged; best iterate returned\n";
      ctx.write_manifest("infer", {{"result", (dir / "result.json").string()}});
    } else if (*rec) {
      const auto model = ctx.model(checkpoint, "model.ckpt");
      const int res_n = resolution > 0 ? resolution : cfg.recon.resolution;
      std::optional<defsdf::ForceCode> z;
      if (condition >= 0) z = code_for(model, ctx.dataset(), tool, condition);
      const auto mesh =
          defsdf::marching_cubes(model, model.object_code(tool_index(model, tool)), z, res_n, ctx.threads());
      const fs::path base = ctx.run_dir / "recon" / record_name(tool, condition);
      defsdf::io::ensure_directory(base.parent_path());
      write_mesh(base, mesh);
      std::cout << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces, watertight "
                << (mesh.watertight_flag ? "yes" : "no") << "\nwrote " << base.string() << ".obj\n";
      ctx.write_manifest("recon", {{"mesh", base.string() + ".obj"}, {"resolution", res_n}});
    } else if (*itp) {
      const auto ds = ctx.dataset();
      const auto model = ctx.model(checkpoint, "model.ckpt");
      const int res_n = resolution > 0 ? resolution : cfg.recon.resolution;
      const auto alpha = model.object_code(tool_index(model, tool));
      const auto codes = defsdf::interpolate_codes(code_for(model, ds, tool, condition),
                                                   code_for(model, ds, tool, to_condition), ts);
      const fs::path dir = ctx.run_dir / "interp" / (tool + "_c" + std::to_string(condition) + "_c" +
                                                     std::to_string(to_condition));
      defsdf::io::ensure_directory(dir);
      Json outputs = Json::array();
      for (std::size_t i = 0; i < codes.size(); ++i) {
        const auto mesh = defsdf::reconstruct_from_code(model, alpha, codes[i], res_n, ctx.threads());
        char name[32];
        std::snprintf(name, sizeof name, "t_%02zu", i);
        write_mesh(dir / name, mesh);
        outputs.push_back({{"t", ts[i]}, {"mesh", (dir / name).string() + ".obj"}});
        std::cout << "t = " << ts[i] << ": " << mesh.faces.size() << " faces\n";
      }
      ctx.write_manifest("interp", outputs);
    } else if (*xs) {
      const auto model = ctx.model(checkpoint, "model.ckpt");
      const int res_n = resolution > 0 ? resolution : cfg.recon.resolution;
      const auto cs = defsdf::export_cross_section(model, model.object_code(tool_index(model, tool)),
                                                   code_for(model, ctx.dataset(), tool, condition),
                                                   {axis, offset}, res_n);
      const fs::path dir = ctx.run_dir / "xsection" / record_name(tool, condition);
      defsdf::io::ensure_directory(dir);
      defsdf::save_grid(dir / "deformed", "deformed", cs.deformed, csv);
      defsdf::save_grid(dir / "nominal", "nominal", cs.nominal, csv);
      defsdf::save_grid(dir / "deformation", "deformation", cs.deformation, csv);
      std::cout << "wrote " << dir.string() << '\n';
      ctx.write_manifest("xsection", {{"dir", dir.string()}, {"axis", axis}, {"offset", offset}});
    } else if (*cor) {
      const auto ds = ctx.dataset();
      const auto model = ctx.model(checkpoint, "model.ckpt");
      const auto& src = find_record(ds, tool, condition);
      const auto& dst = find_record(ds, tool, to_condition);
      const auto idx = defsdf::subsample_indices(src.deformed_cloud.size(),
                                                 static_cast<std::size_t>(std::max(1, n_marked)), cfg.seed);
      const auto marked = defsdf::select(src.deformed_cloud, idx);
      const auto r = defsdf::correspondences(model, model.object_code(tool_index(model, tool)),
                                             code_for(model, ds, tool, condition),
                                             code_for(model, ds, tool, to_condition), marked.points);
      double err = 0.0;
      std::vector<double> errors;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        errors.push_back((r.target[i] - dst.deformed_cloud.points[static_cast<std::size_t>(idx[i])]).norm());
        err += errors.back();
      }
      err /= static_cast<double>(idx.size());
      const double spacing = defsdf::mean_spacing(dst.deformed_cloud.points);
      const fs::path dir = ctx.run_dir / "correspond" /
                           (tool + "_c" + std::to_string(condition) + "_c" + std::to_string(to_condition));
      defsdf::io::ensure_directory(dir);
      defsdf::PointCloud tgt;
      tgt.points = r.target;
      tgt.frame_scale = marked.frame_scale;
      defsdf::io::write_ply(dir / "source.ply", marked);
      defsdf::io::write_ply(dir / "target.ply", tgt, &errors, "error");
      Json out = {{"mean_error", err},
                  {"mean_spacing", spacing},
                  {"failures", r.failures()},
                  {"points", idx.size()}};
      defsdf::io::write_json(dir / "result.json", out);
      std::cout << "mean error " << err << " (surface spacing " << spacing << "), " << r.failures()
                << " non-converged\n";
      ctx.write_manifest("correspond", {{"result", (dir / "result.json").string()}});
    } else if (*ev) {
      const auto model = ctx.model(checkpoint, "model.ckpt");
      const auto ds = ctx.dataset();
      auto opt = cfg.eval;
      if (resolution > 0) opt.resolution = resolution;
      opt.threads = ctx.threads();
      const auto rep = defsdf::eval_model(model, ds, opt);
      defsdf::io::ensure_directory(ctx.run_dir);
      defsdf::io::write_json(ctx.run_dir / "eval.json", defsdf::to_json(rep));
      const std::string table = defsdf::format_table(rep);
      std::ofstream(ctx.run_dir / "eval.txt") << table;
      std::cout << table;
      ctx.write_manifest("eval", {{"json", (ctx.run_dir / "eval.json").string()},
                                  {"table", (ctx.run_dir / "eval.txt").string()}});
    }
  } catch (const defsdf::Error& e) {
    std::cerr << "defsdf: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "defsdf: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
