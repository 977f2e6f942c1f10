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


// Properties of the desk model trained by the acceptance run. The checkpoint
// and dataset directory come from DEFSDF_DESK_DIR (ctest orders this after
// the acceptance test).

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace defsdf {
namespace {

struct DeskModel {
  RunConfig config;
  FieldModel model;
  Dataset ds;
};

const DeskModel& desk() {
  static const DeskModel d = [] {
    const io::fs::path dir = DEFSDF_DESK_DIR;
    DeskModel m;
    m.config = load_run_config(io::fs::path(DEFSDF_SOURCE_DIR) / "configs" / "desk.json").first;
    m.model = load_model(dir / "model.ckpt");
    m.ds = load_dataset(dir / "data");
    return m;
  }();
  return d;
}

double mean_norm(const std::vector<Vec3>& v) {
  double s = 0;
  for (const auto& x : v) s += x.norm();
  return s / static_cast<double>(v.size());
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

std::vector<const DeformationRecord*> train_records(int tool) {
  std::vector<const DeformationRecord*> out;
  for (const auto& d : desk().ds.deformations)
    if (d.tool_index == tool && d.split == "train") out.push_back(&d);
  return out;
}

/// The record's contact patch with the reaction set to zero.
ForceCode zero_load_code(const FieldModel& m, const DeformationRecord& d) {
  ContactObservation obs = d.contacts;
  obs.reaction = Vec3::Zero();
  return encode_force(m, obs).z;
}

PointCloud sampled(const TriangleMesh& mesh) { return sample_surface(mesh, 3000, 17); }

TEST(DeskModel, ZeroLoadFieldVanishes) {
  const auto& [cfg, m, ds] = desk();
  // Every contact patch of the dataset, held-out conditions included.
  for (const auto& d : ds.deformations) {
    const PointCloud& nominal = ds.tools[static_cast<std::size_t>(d.tool_index)].nominal_cloud;
    const double mean = mean_norm(deformation_field(m, zero_load_code(m, d), m.object_code(d.tool_index),
                                                    nominal.points));
    EXPECT_LT(mean, 0.005) << d.tool_id << " c" << d.condition << " (" << d.split << ")";
  }
}

TEST(DeskModel, DeformedSurfaceSitsOnTheZeroLevel) {
  const auto& [cfg, m, ds] = desk();
  for (const auto& d : ds.deformations) {
    if (d.split != "train") continue;
    const ForceCode z = m.force_code(m.force_index(d.tool_id, d.condition));
    const auto s = deformed_sdf(m, z, m.object_code(d.tool_index), d.deformed_cloud.points);
    std::vector<double> a;
    double mean = 0;
    for (double v : s) {
      a.push_back(std::abs(v));
      mean += std::abs(v);
    }
    mean /= static_cast<double>(a.size());
    EXPECT_LT(mean, 0.01) << d.tool_id << " c" << d.condition;
    // p + D(p) lands on the nominal surface.
    EXPECT_LT(quantile(a, 0.95), 0.02) << d.tool_id << " c" << d.condition;
  }
}

TEST(DeskModel, LargerLoadLargerField) {
  const auto& [cfg, m, ds] = desk();
  for (int t = 0; t < static_cast<int>(ds.tools.size()); ++t) {
    auto recs = train_records(t);
    ASSERT_GE(recs.size(), 2u);
    auto [lo, hi] = std::minmax_element(recs.begin(), recs.end(), [](auto* a, auto* b) {
      return a->max_deflection < b->max_deflection;
    });
    auto field = [&](const DeformationRecord* r) {
      return mean_norm(deformation_field(m, m.force_code(m.force_index(r->tool_id, r->condition)),
                                         m.object_code(t), r->deformed_cloud.points));
    };
    EXPECT_GT(field(*hi), field(*lo)) << ds.tools[static_cast<std::size_t>(t)].id;
  }
}

TEST(DeskModel, CodesDependOnForceAndFieldsOnObject) {
  const auto& [cfg, m, ds] = desk();
  const auto& d = ds.deformations.front();
  ContactObservation doubled = d.contacts;
  doubled.reaction *= 2.0;
  EXPECT_GT((encode_force(m, d.contacts).z - encode_force(m, doubled).z).norm(), 0.0f);

  const ForceCode z = m.force_code(0);
  const auto& pts = ds.tools[0].nominal_cloud.points;
  const auto a = deformation_field(m, z, m.object_code(0), pts);
  const auto b = deformation_field(m, z, m.object_code(1), pts);
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]).norm();
  EXPECT_GT(diff / static_cast<double>(a.size()), 1e-4);
}

TEST(DeskModel, InferenceOnTheFullCloudMatchesTheTrainingCode) {
  const auto& [cfg, m, ds] = desk();
  const DeformationRecord& d = *train_records(0).front();
  const int res = cfg.recon.resolution;
  PartialObservation obs;
  obs.visible_points = subsample(d.deformed_cloud, std::min<std::size_t>(2000, d.deformed_cloud.size()), 3);
  obs.known_u = d.contacts.reaction;
  obs.alpha = m.object_code(d.tool_index);
  InferenceOptions opt = cfg.infer;
  opt.recon_resolution = res;
  opt.threads = resolve_threads(0);
  const InferenceResult r = infer_deformation(m, obs, opt, cfg.train.weights.delta);
  const ForceCode z_train = m.force_code(m.force_index(d.tool_id, d.condition));
  const PointCloud trained = sample_surface(reconstruct_from_code(m, obs.alpha, z_train, res, opt.threads),
                                            opt.recon_points, derive_seed(opt.seed, 99));
  const double cd_train = chamfer(trained, d.deformed_cloud);
  const double cd_inferred = chamfer(r.reconstructed_cloud, d.deformed_cloud);
  EXPECT_LE(cd_inferred, 1.5 * cd_train) << "inferred " << cd_inferred << " training code " << cd_train;
}

CrossSection zero_load_section(int res) {
  const auto& [cfg, m, ds] = desk();
  return export_cross_section(m, m.object_code(0), zero_load_code(m, *train_records(0).front()), Plane{2, 0.0},
                              res);
}

TEST(DeskModel, CrossSectionZeroLoadAgreement) {
  // Deformed and shape grids agree over the clamp band to the zero-level
  // tolerance used above.
  const CrossSection rest = zero_load_section(64);
  const double delta = desk().config.train.weights.delta;
  std::vector<double> diff;
  for (std::size_t i = 0; i < rest.nominal.values.size(); ++i)
    if (std::abs(rest.nominal.values[i]) < delta)
      diff.push_back(std::abs(rest.deformed.values[i] - rest.nominal.values[i]));
  ASSERT_FALSE(diff.empty());
  EXPECT_LT(quantile(diff, 0.95), 0.02) << "max " << quantile(diff, 1.0);
}

TEST(DeskModel, CrossSectionSymmetry) {
  // Shape field mirrored about the tool's y symmetry plane, over the clamp band
  // where training constrains it.
  const auto& [cfg, m, ds] = desk();
  const int res = 64;
  const CrossSection rest = zero_load_section(res);
  const double delta = cfg.train.weights.delta;
  const double y0 = ds.tools[0].transform.apply(Vec3::Zero()).y();
  const FieldEvaluator f(m, m.object_code(0));
  double asym = 0, asym_max = 0;
  std::size_t n = 0;
  const FieldGrid& g = rest.nominal;
  for (int j = 0; j < res; ++j)
    for (int i = 0; i < res; ++i) {
      if (std::abs(g.values[g.index(i, j, 0)]) >= delta) continue;
      Vec3 p = g.node(i, j, 0), q = p;
      q.y() = 2 * y0 - p.y();
      const double e = std::abs(f.object_sdf(p) - f.object_sdf(q));
      asym += e;
      asym_max = std::max(asym_max, e);
      ++n;
    }
  ASSERT_GT(n, 0u);
  EXPECT_LT(asym / static_cast<double>(n), 1e-3) << "max " << asym_max << " over " << n << " nodes";
}

TEST(DeskModel, CrossSectionDeformationPeak) {
  const auto& [cfg, m, ds] = desk();
  const PointCloud& nominal = ds.tools[0].nominal_cloud;
  const ObjectCode alpha = m.object_code(0);
  const int res = 64;

  // |D| peaks where the tool deflects most.
  const DeformationRecord* rec = nullptr;
  for (auto* r : train_records(0))
    if (!rec || r->max_deflection > rec->max_deflection) rec = r;
  // Beam sections move rigidly, so the maximum is attained on a whole section:
  // every point within 1% of the largest displacement counts.
  std::vector<double> disp(rec->deformed_cloud.size());
  for (std::size_t i = 0; i < disp.size(); ++i) disp[i] = (rec->deformed_cloud.points[i] - nominal.points[i]).norm();
  const auto far = std::max_element(disp.begin(), disp.end());
  const double max_disp = *far;
  const double plane_z = rec->deformed_cloud.points[static_cast<std::size_t>(far - disp.begin())].z();
  std::vector<Vec3> peak_true;
  for (std::size_t i = 0; i < disp.size(); ++i)
    if (disp[i] >= 0.99 * max_disp) peak_true.push_back(rec->deformed_cloud.points[i]);
  const ForceCode z = m.force_code(m.force_index(rec->tool_id, rec->condition));
  const CrossSection cs = export_cross_section(m, alpha, z, Plane{2, plane_z}, res);
  double best = -1;
  Vec3 peak_model = Vec3::Zero();
  for (int j = 0; j < res; ++j)
    for (int i = 0; i < res; ++i) {
      const std::size_t n = cs.deformation.index(i, j, 0);
      if (std::abs(cs.deformed.values[n]) > 0.05) continue;  // stay on the deformed surface
      if (cs.deformation.values[n] > best) {
        best = cs.deformation.values[n];
        peak_model = cs.deformation.node(i, j, 0);
      }
    }
  ASSERT_GE(best, 0.0);
  double lo = 1e9, hi = -1e9;
  for (const auto& p : nominal.points) {
    lo = std::min(lo, p.x());
    hi = std::max(hi, p.x());
  }
  double to_peak = 1e9;
  for (const auto& p : peak_true) to_peak = std::min(to_peak, (peak_model - p).norm());
  EXPECT_LT(to_peak, 0.1 * (hi - lo));
}

TEST(DeskModel, InterpolationIsContinuous) {
  const auto& [cfg, m, ds] = desk();
  const auto recs = train_records(0);
  const DeformationRecord& a = *recs.front();
  const DeformationRecord& b = *recs.back();
  const ObjectCode alpha = m.object_code(0);
  const std::vector<double> ts = {0.0, 0.25, 0.5, 0.75, 1.0};
  const auto codes = interpolate_codes(m.force_code(m.force_index(a.tool_id, a.condition)),
                                       m.force_code(m.force_index(b.tool_id, b.condition)), ts);
  std::vector<PointCloud> clouds;
  for (const auto& z : codes) clouds.push_back(sampled(reconstruct_from_code(m, alpha, z, 96, resolve_threads(0))));
  const double ends = chamfer(clouds.front(), clouds.back());
  for (std::size_t i = 1; i < clouds.size(); ++i) {
    const double step = chamfer(clouds[i - 1], clouds[i]);
    EXPECT_TRUE(std::isfinite(step));
    EXPECT_LE(step, ends) << "t " << ts[i - 1] << " -> " << ts[i];
  }
  EXPECT_LE(chamfer(clouds[2], clouds.front()), ends);
  EXPECT_LE(chamfer(clouds[2], clouds.back()), ends);
}

}  // namespace
}  // namespace defsdf
