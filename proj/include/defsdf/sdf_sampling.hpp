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

#include "defsdf/geometry.hpp"
#include "defsdf/kdtree.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace defsdf {

/// Query points with ground-truth signed distances. Surface entries
/// (surface_mask) carry the unit normal and the index of the cloud point they
/// were taken from; other entries have a zero normal and index -1.
struct SdfSampleSet {
  std::vector<Vec3> queries;
  std::vector<double> sdf_values;
  std::vector<std::uint8_t> surface_mask;
  std::vector<Vec3> normals;
  std::vector<Index> surface_index;

  std::size_t size() const { return queries.size(); }

  std::size_t surface_count() const {
    std::size_t n = 0;
    for (auto m : surface_mask) n += m ? 1 : 0;
    return n;
  }

  void reserve(std::size_t n) {
    queries.reserve(n);
    sdf_values.reserve(n);
    surface_mask.reserve(n);
    normals.reserve(n);
    surface_index.reserve(n);
  }

  void push(const Vec3& q, double s, bool on_surface, const Vec3& n = Vec3::Zero(),
            Index source = -1) {
    queries.push_back(q);
    sdf_values.push_back(s);
    surface_mask.push_back(on_surface ? 1 : 0);
    normals.push_back(on_surface ? n : Vec3::Zero());
    surface_index.push_back(on_surface ? source : -1);
  }
};

inline void validate(const SdfSampleSet& s, double region = kRegionHalfExtent) {
  const std::size_t n = s.queries.size();
  require(s.sdf_values.size() == n && s.surface_mask.size() == n && s.normals.size() == n &&
              s.surface_index.size() == n,
          ErrorKind::kInvalidInput, "sdf sample arrays differ in length");
  for (std::size_t i = 0; i < n; ++i) {
    require(s.queries[i].allFinite() && std::isfinite(s.sdf_values[i]), ErrorKind::kInvalidInput,
            "non-finite sdf sample");
    require(s.queries[i].cwiseAbs().maxCoeff() <= region + 1e-9, ErrorKind::kInvalidInput,
            "sdf query outside the normalized region");
    if (s.surface_mask[i]) {
      require(std::abs(s.sdf_values[i]) <= 1e-6, ErrorKind::kInvalidInput,
              "surface sample with nonzero signed distance");
      require(std::abs(s.normals[i].norm() - 1.0) <= 1e-6, ErrorKind::kInvalidInput,
              "surface sample without a unit normal");
    }
  }
}

/// Signed distance to an oriented point cloud: distance to the nearest
/// sample, negative when the query lies behind that sample's normal.
class CloudSdf {
 public:
  explicit CloudSdf(const PointCloud& cloud) : cloud_(cloud), tree_(cloud.points) {
    require(!cloud.empty(), ErrorKind::kInvalidInput, "signed distance to an empty cloud");
    require(cloud.has_normals(), ErrorKind::kInvalidInput,
            "signed distance needs oriented normals on the cloud");
  }

  double operator()(const Vec3& q) const {
    const Neighbor nn = tree_.nearest(q);
    const std::size_t i = static_cast<std::size_t>(nn.index);
    const double d = std::sqrt(nn.squared_distance);
    return (q - cloud_.points[i]).dot(cloud_.normals[i]) < 0.0 ? -d : d;
  }

 private:
  const PointCloud& cloud_;
  KdTree tree_;
};

inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Generalized winding number of a closed triangle mesh around q (1 inside, 0 outside).
inline double winding_number(const TriangleMesh& mesh, const Vec3& q) {
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3 a = mesh.vertices[static_cast<std::size_t>(f[0])] - q;
    const Vec3 b = mesh.vertices[static_cast<std::size_t>(f[1])] - q;
    const Vec3 c = mesh.vertices[static_cast<std::size_t>(f[2])] - q;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

/// Exact signed distance to a watertight mesh (winding-number sign).
inline double mesh_signed_distance(const TriangleMesh& mesh, const Vec3& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : mesh.faces) {
    const Vec3 cp = closest_point_on_triangle(q, mesh.vertices[static_cast<std::size_t>(f[0])],
                                              mesh.vertices[static_cast<std::size_t>(f[1])],
                                              mesh.vertices[static_cast<std::size_t>(f[2])]);
    best = std::min(best, (cp - q).squaredNorm());
  }
  const double d = std::sqrt(best);
  return winding_number(mesh, q) > 0.5 ? -d : d;
}

struct SdfSamplingOptions {
  std::size_t n_total = 25000;
  double near_fraction = 0.8;
  /// Share of the near-surface budget spent on unperturbed surface points.
  double surface_fraction = 0.5;
  double sigma_near = 0.01;
  double region = kRegionHalfExtent;
  std::uint64_t seed = 0;
};

namespace detail {

struct SampleBudget {
  std::size_t surface, perturbed, uniform;
};

inline SampleBudget split_budget(const SdfSamplingOptions& opt) {
  require(opt.n_total >= 1, ErrorKind::kInvalidInput, "n_total must be at least 1");
  require(opt.near_fraction >= 0.0 && opt.near_fraction <= 1.0, ErrorKind::kInvalidInput,
          "near_fraction must lie in [0, 1]");
  require(opt.surface_fraction >= 0.0 && opt.surface_fraction <= 1.0, ErrorKind::kInvalidInput,
          "surface_fraction must lie in [0, 1]");
  require(opt.sigma_near >= 0.0, ErrorKind::kInvalidInput, "sigma_near must be non-negative");
  const auto near = static_cast<std::size_t>(std::llround(opt.near_fraction * opt.n_total));
  const auto surface = static_cast<std::size_t>(std::llround(opt.surface_fraction * near));
  return {surface, near - surface, opt.n_total - near};
}

template <class SignedDistance>
SdfSampleSet sample_from_surface(const PointCloud& surface, const SignedDistance& sdf,
                                 const SdfSamplingOptions& opt) {
  const SampleBudget budget = split_budget(opt);
  Rng rng(opt.seed);
  std::uniform_int_distribution<std::size_t> pick(0, surface.size() - 1);
  std::normal_distribution<double> noise(0.0, opt.sigma_near);
  std::uniform_real_distribution<double> box(-opt.region, opt.region);
  SdfSampleSet out;
  out.reserve(opt.n_total);
  for (std::size_t s = 0; s < budget.surface; ++s) {
    const std::size_t i = pick(rng);
    out.push(surface.points[i], 0.0, true, surface.normals[i], static_cast<Index>(i));
  }
  for (std::size_t s = 0; s < budget.perturbed; ++s) {
    const std::size_t i = pick(rng);
    Vec3 q = surface.points[i] + Vec3(noise(rng), noise(rng), noise(rng));
    q = q.cwiseMax(-opt.region).cwiseMin(opt.region);
    out.push(q, sdf(q), false);
  }
  for (std::size_t s = 0; s < budget.uniform; ++s) {
    const Vec3 q(box(rng), box(rng), box(rng));
    out.push(q, sdf(q), false);
  }
  return out;
}

}  // namespace detail

/// Samples queries around an oriented (normalized) cloud; signs come from the
/// nearest point's normal.
inline SdfSampleSet sample_sdf(const PointCloud& cloud, const SdfSamplingOptions& opt) {
  validate(cloud);
  const CloudSdf sdf(cloud);
  return detail::sample_from_surface(cloud, sdf, opt);
}

/// Samples queries around a watertight mesh; distances are exact and signs
/// come from the winding number. `surface_points` controls the density of
/// the surface cloud drawn from the mesh.
inline SdfSampleSet sample_sdf(const TriangleMesh& mesh, const SdfSamplingOptions& opt,
                               std::size_t surface_points = 4096) {
  validate(mesh);
  require(is_watertight(mesh), ErrorKind::kInvalidInput,
          "signed distance needs a watertight mesh to decide interiority");
  const PointCloud surface = sample_surface(mesh, surface_points, derive_seed(opt.seed, 77));
  auto sdf = [&mesh](const Vec3& q) { return mesh_signed_distance(mesh, q); };
  return detail::sample_from_surface(surface, sdf, opt);
}

}  // namespace defsdf
