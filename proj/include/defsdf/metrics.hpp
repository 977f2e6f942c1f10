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

#include "defsdf/datagen.hpp"
#include "defsdf/fieldnet.hpp"
#include "defsdf/losses.hpp"
#include "defsdf/reconstruct.hpp"

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace defsdf {

/// Mean absolute SDF error per partition; a partition without samples is absent.
struct L1Error {
  std::optional<double> on_surface;
  std::optional<double> off_surface;
};

inline L1Error l1_sdf_error(std::span<const double> predicted, const SdfSampleSet& samples) {
  require(predicted.size() == samples.size(), ErrorKind::kShape,
          "prediction count does not match the sample count");
  double on = 0, off = 0;
  std::size_t n_on = 0, n_off = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double e = std::abs(predicted[i] - samples.sdf_values[i]);
    if (samples.surface_mask[i]) {
      on += e;
      ++n_on;
    } else {
      off += e;
      ++n_off;
    }
  }
  L1Error r;
  if (n_on) r.on_surface = on / static_cast<double>(n_on);
  if (n_off) r.off_surface = off / static_cast<double>(n_off);
  return r;
}

inline L1Error l1_sdf_error(const FieldModel& model, const ObjectCode& alpha,
                            const std::optional<ForceCode>& z, const SdfSampleSet& samples) {
  const FieldEvaluator f(model, alpha, z);
  std::vector<double> pred;
  pred.reserve(samples.size());
  for (const auto& q : samples.queries) pred.push_back(f.sdf(q));
  return l1_sdf_error(pred, samples);
}

/// Lateral offset of the far end of a tool along `axis`: centroid of the
/// points within `band` of the maximum axis coordinate, minus the same
/// centroid of the reference, with the axis component dropped.
inline Vec3 tip_offset(std::span<const Vec3> points, std::span<const Vec3> reference, int axis = 0,
                       double band = 0.05) {
  auto tip_centroid = [&](std::span<const Vec3> pts) {
    require(!pts.empty(), ErrorKind::kInvalidInput, "tip offset of an empty point set");
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) hi = std::max(hi, p[axis]);
    Vec3 c = Vec3::Zero();
    std::size_t n = 0;
    for (const auto& p : pts)
      if (p[axis] >= hi - band) {
        c += p;
        ++n;
      }
    return Vec3(c / static_cast<double>(n));
  };
  Vec3 d = tip_centroid(points) - tip_centroid(reference);
  d[axis] = 0.0;
  return d;
}

struct EvalOptions {
  std::string split = "all";     // all, train or test
  int resolution = 128;
  std::size_t recon_points = 5600;
  std::size_t gt_points = 0;     // 0 keeps every ground-truth point
  double scale = 1e3;            // reported values are multiplied by this
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct EvalEntry {
  std::string partition;  // train_nominal, train_deformed, test_deformed
  std::string tool_id;
  int condition = -1;
  double frame_scale = 1.0;
  double cd = 0.0;        // normalized
  L1Error l1;             // normalized
  bool watertight = false;
};

struct EvalRow {
  std::string partition;
  std::size_t count = 0;
  double cd = 0, cd_m2 = 0;
  std::optional<double> l1_on, l1_off, l1m_on, l1m_off;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  std::vector<EvalRow> rows;
  double scale = 1e3;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline EvalRow aggregate(const std::string& partition, const std::vector<EvalEntry>& entries,
                         double scale) {
  EvalRow row;
  row.partition = partition;
  std::vector<double> cd, cdm, on, off, onm, offm;
  for (const auto& e : entries) {
    if (e.partition != partition) continue;
    ++row.count;
    cd.push_back(e.cd);
    cdm.push_back(e.cd * e.frame_scale * e.frame_scale);
    if (e.l1.on_surface) {
      on.push_back(*e.l1.on_surface);
      onm.push_back(*e.l1.on_surface * e.frame_scale);
    }
    if (e.l1.off_surface) {
      off.push_back(*e.l1.off_surface);
      offm.push_back(*e.l1.off_surface * e.frame_scale);
    }
  }
  if (row.count == 0) return row;
  row.cd = mean_of(cd) * scale;
  row.cd_m2 = mean_of(cdm) * scale;
  if (!on.empty()) {
    row.l1_on = mean_of(on) * scale;
    row.l1m_on = mean_of(onm) * scale;
  }
  if (!off.empty()) {
    row.l1_off = mean_of(off) * scale;
    row.l1m_off = mean_of(offm) * scale;
  }
  return row;
}

inline EvalEntry evaluate_one(const FieldModel& model, int tool, const std::optional<ForceCode>& z,
                              const PointCloud& truth, const SdfSampleSet& sdf,
                              const EvalOptions& opt, std::uint64_t tag) {
  const ObjectCode alpha = model.object_code(tool);
  EvalEntry e;
  e.frame_scale = truth.frame_scale;
  const TriangleMesh mesh = marching_cubes(model, alpha, z, opt.resolution, opt.threads);
  e.watertight = mesh.watertight_flag;
  const PointCloud recon = sample_surface(mesh, opt.recon_points, derive_seed(opt.seed, tag));
  const PointCloud gt = opt.gt_points > 0 && opt.gt_points < truth.size()
                            ? subsample(truth, opt.gt_points, derive_seed(opt.seed, tag + 1))
                            : truth;
  e.cd = chamfer(recon.points, gt.points);
  e.l1 = l1_sdf_error(model, alpha, z, sdf);
  return e;
}

}  // namespace detail

/// Reconstruction accuracy per record and per partition. Nominal records use
/// the shape field alone; training deformations use their stored force code;
/// held-out deformations encode their contact formation.
inline EvalReport eval_model(const FieldModel& model, const Dataset& ds, const EvalOptions& opt = {}) {
  require(opt.split == "all" || opt.split == "train" || opt.split == "test", ErrorKind::kConfig,
          "eval split must be all, train or test");
  EvalReport rep;
  rep.scale = opt.scale;
  std::uint64_t tag = 0;
  if (opt.split != "test") {
    for (std::size_t t = 0; t < ds.tools.size(); ++t) {
      const int i = model.object_index(ds.tools[t].id);
      require(i >= 0, ErrorKind::kInvalidDataset, "tool " + ds.tools[t].id + " is not in the model");
      EvalEntry e = detail::evaluate_one(model, i, std::nullopt, ds.tools[t].nominal_cloud,
                                         ds.tools[t].nominal_sdf, opt, tag += 2);
      e.partition = "train_nominal";
      e.tool_id = ds.tools[t].id;
      rep.entries.push_back(std::move(e));
    }
  }
  if (model.deformation_trained) {
    for (const auto& d : ds.deformations) {
      if (opt.split != "all" && d.split != opt.split) continue;
      const int i = model.object_index(d.tool_id);
      require(i >= 0, ErrorKind::kInvalidDataset, "tool " + d.tool_id + " is not in the model");
      const int k = model.force_index(d.tool_id, d.condition);
      const bool train = d.split == "train";
      const ForceCode z = train && k >= 0 ? model.force_code(k) : encode_force(model, d.contacts).z;
      EvalEntry e = detail::evaluate_one(model, i, z, d.deformed_cloud, d.sdf, opt, tag += 2);
      e.partition = train ? "train_deformed" : "test_deformed";
      e.tool_id = d.tool_id;
      e.condition = d.condition;
      rep.entries.push_back(std::move(e));
    }
  }
  require(!rep.entries.empty(), ErrorKind::kInvalidInput, "evaluation split is empty");
  for (const char* p : {"train_nominal", "train_deformed", "test_deformed"}) {
    EvalRow row = detail::aggregate(p, rep.entries, opt.scale);
    if (row.count > 0) rep.rows.push_back(row);
  }
  return rep;
}

inline const EvalRow* find_row(const EvalReport& r, const std::string& partition) {
  for (const auto& row : r.rows)
    if (row.partition == partition) return &row;
  return nullptr;
}

inline io::Json to_json(const EvalReport& r) {
  auto opt_json = [](const std::optional<double>& v) { return v ? io::Json(*v) : io::Json(nullptr); };
  io::Json j;
  j["scale"] = r.scale;
  j["rows"] = io::Json::array();
  for (const auto& row : r.rows)
    j["rows"].push_back({{"partition", row.partition}, {"count", row.count},
                         {"cd", row.cd},               {"cd_m2", row.cd_m2},
                         {"l1_on", opt_json(row.l1_on)}, {"l1_off", opt_json(row.l1_off)},
                         {"l1m_on", opt_json(row.l1m_on)}, {"l1m_off", opt_json(row.l1m_off)}});
  j["entries"] = io::Json::array();
  for (const auto& e : r.entries)
    j["entries"].push_back({{"partition", e.partition},
                            {"tool_id", e.tool_id},
                            {"condition", e.condition},
                            {"frame_scale", e.frame_scale},
                            {"cd", e.cd},
                            {"l1_on", opt_json(e.l1.on_surface)},
                            {"l1_off", opt_json(e.l1.off_surface)},
                            {"watertight", e.watertight}});
  return j;
}

/// Aligned plain-text table, one row per partition.
inline std::string format_table(const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v)
      std::snprintf(buf, sizeof buf, "%12.4f", *v);
    else
      std::snprintf(buf, sizeof buf, "%12s", "-");
    return std::string(buf);
  };
  std::ostringstream out;
  char head[256];
  std::snprintf(head, sizeof head, "%-16s %5s %12s %12s %12s %12s %12s %12s\n", "partition", "n",
                "CD", "CD_m2", "L1 on", "L1 off", "L1_m on", "L1_m off");
  out << head;
  for (const auto& row : r.rows) {
    char lead[64];
    std::snprintf(lead, sizeof lead, "%-16s %5zu", row.partition.c_str(), row.count);
    out << lead << ' ' << cell(row.cd) << ' ' << cell(row.cd_m2) << ' ' << cell(row.l1_on) << ' '
        << cell(row.l1_off) << ' ' << cell(row.l1m_on) << ' ' << cell(row.l1m_off) << '\n';
  }
  out << "(values x " << r.scale << ")\n";
  return out.str();
}

}  // namespace defsdf
