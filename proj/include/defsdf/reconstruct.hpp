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

#include "defsdf/fieldnet.hpp"
#include "defsdf/io.hpp"
#include "defsdf/marching_cubes.hpp"

#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace defsdf {

/// Samples O(x + D(x)) (or O(x) without a force code) on the reconstruction cube.
inline FieldGrid sample_model_grid(const FieldModel& model, const ObjectCode& alpha,
                                   const std::optional<ForceCode>& z, int resolution,
                                   unsigned threads = 1) {
  FieldGrid g = cube_grid(resolution);
  const FieldEvaluator f(model, alpha, z);
  sample_grid(g, [&f](const Vec3& x) { return f.sdf(x); }, threads);
  return g;
}

/// Zero level set of the model field at `resolution`^3.
inline TriangleMesh marching_cubes(const FieldModel& model, const ObjectCode& alpha,
                                   const std::optional<ForceCode>& z, int resolution,
                                   unsigned threads = 1) {
  require(resolution >= 2, ErrorKind::kInvalidInput, "grid resolution must be at least 2");
  return marching_cubes(sample_model_grid(model, alpha, z, resolution, threads));
}

struct Plane {
  int axis = 1;         // 0 = x, 1 = y, 2 = z; the plane holds the other two axes
  double offset = 0.0;  // normalized units
};

struct CrossSection {
  Plane plane;
  FieldGrid deformed;     // O(x + D(x))
  FieldGrid nominal;      // O(x)
  FieldGrid deformation;  // ||D(x)|| in values, D(x) in vectors
};

/// Planar slices of the deformed field, the shape field and |D| for heat maps.
inline CrossSection export_cross_section(const FieldModel& model, const ObjectCode& alpha,
                                         const ForceCode& z, const Plane& plane, int resolution,
                                         double half = kRegionHalfExtent) {
  require(plane.axis >= 0 && plane.axis <= 2, ErrorKind::kInvalidInput, "plane axis must be 0, 1 or 2");
  require(std::abs(plane.offset) <= half, ErrorKind::kInvalidInput,
          "cross-section plane lies outside the reconstruction region");
  require(resolution >= 2, ErrorKind::kInvalidInput, "cross-section resolution must be at least 2");
  FieldGrid base;
  base.spacing = 2.0 * half / (resolution - 1);
  base.origin = Vec3::Constant(-half);
  base.origin[plane.axis] = plane.offset;
  for (int a = 0; a < 3; ++a) base.counts[static_cast<std::size_t>(a)] = a == plane.axis ? 1 : resolution;
  CrossSection cs{plane, base, base, base};
  const FieldEvaluator f(model, alpha, z);
  cs.deformed.values.resize(base.node_count());
  cs.nominal.values.resize(base.node_count());
  cs.deformation.values.resize(base.node_count());
  cs.deformation.vectors.resize(base.node_count());
  for (int k = 0; k < base.counts[2]; ++k)
    for (int j = 0; j < base.counts[1]; ++j)
      for (int i = 0; i < base.counts[0]; ++i) {
        const std::size_t n = base.index(i, j, k);
        const Vec3 x = base.node(i, j, k);
        cs.deformed.values[n] = f.sdf(x);
        cs.nominal.values[n] = f.object_sdf(x);
        const Vec3 d = f.deformation(x);
        cs.deformation.vectors[n] = d;
        cs.deformation.values[n] = d.norm();
      }
  return cs;
}

/// Writes a grid as an array directory (values, optional vectors) with its
/// geometry in the manifest, plus an optional CSV of node coordinates and values.
inline void save_grid(const io::fs::path& dir, const std::string& name, const FieldGrid& g,
                      bool csv = false) {
  validate(g);
  io::ArrayWriter w(dir);
  std::vector<std::size_t> shape = {static_cast<std::size_t>(g.counts[2]),
                                    static_cast<std::size_t>(g.counts[1]),
                                    static_cast<std::size_t>(g.counts[0])};
  std::vector<float> vals(g.values.begin(), g.values.end());
  w.add_float(name + "_values", name + "_values.bin", vals, shape);
  if (!g.vectors.empty()) {
    auto vshape = shape;
    vshape.push_back(3);
    w.add_float(name + "_vectors", name + "_vectors.bin", io::flatten(g.vectors), vshape);
  }
  w.meta()[name] = {{"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
                    {"spacing", g.spacing},
                    {"counts", {g.counts[0], g.counts[1], g.counts[2]}},
                    {"layout", "x fastest"}};
  w.finish();
  if (csv) {
    std::ofstream out(dir / (name + ".csv"));
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + (dir / (name + ".csv")).string());
    out << "x,y,z,value" << (g.vectors.empty() ? "" : ",dx,dy,dz") << '\n';
    out.precision(9);
    for (int k = 0; k < g.counts[2]; ++k)
      for (int j = 0; j < g.counts[1]; ++j)
        for (int i = 0; i < g.counts[0]; ++i) {
          const std::size_t n = g.index(i, j, k);
          const Vec3 x = g.node(i, j, k);
          out << x.x() << ',' << x.y() << ',' << x.z() << ',' << g.values[n];
          if (!g.vectors.empty())
            out << ',' << g.vectors[n].x() << ',' << g.vectors[n].y() << ',' << g.vectors[n].z();
          out << '\n';
        }
  }
}

struct CorrespondenceOptions {
  int max_iterations = 50;
  double tolerance = 1e-5;  // residual norm, normalized units
};

struct CorrespondenceResult {
  std::vector<Vec3> source;        // marked points under z_a
  std::vector<Vec3> target;        // located points under z_b
  std::vector<Vec3> displacement;  // target - source
  std::vector<double> residual;
  std::vector<std::uint8_t> converged;

  std::size_t failures() const {
    std::size_t n = 0;
    for (auto c : converged) n += c ? 0 : 1;
    return n;
  }
};

/// Carries points on the z_a surface to the z_b surface through the shared
/// shape frame: solves q + D(q | z_b) = p + D(p | z_a) by damped Newton
/// iterations seeded at p.
inline CorrespondenceResult correspondences(const FieldModel& model, const ObjectCode& alpha,
                                            const ForceCode& z_a, const ForceCode& z_b,
                                            std::span<const Vec3> marked,
                                            const CorrespondenceOptions& opt = {}) {
  const FieldEvaluator fa(model, alpha, z_a);
  const FieldEvaluator fb(model, alpha, z_b);
  CorrespondenceResult r;
  for (const Vec3& p : marked) {
    const Vec3 goal = p + fa.deformation(p);
    Vec3 q = p;
    Vec3 g = q + fb.deformation(q) - goal;
    double res = g.norm();
    for (int it = 0; it < opt.max_iterations && res > opt.tolerance; ++it) {
      const Eigen::Matrix3d j = fb.warp_jacobian(q);
      const Vec3 step = j.fullPivLu().solve(g);
      if (!step.allFinite()) break;
      double t = 1.0;
      bool improved = false;
      for (int half = 0; half < 20; ++half, t *= 0.5) {
        const Vec3 cand = q - t * step;
        const Vec3 gc = cand + fb.deformation(cand) - goal;
        if (gc.norm() < res) {
          q = cand;
          g = gc;
          res = gc.norm();
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    r.source.push_back(p);
    r.target.push_back(q);
    r.displacement.push_back(q - p);
    r.residual.push_back(res);
    r.converged.push_back(res <= opt.tolerance ? 1 : 0);
  }
  return r;
}

}  // namespace defsdf
