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

#include "defsdf/common.hpp"
#include "defsdf/kdtree.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace defsdf {

/// Half-extent of the cube every normalized query, grid and sample lives in.
inline constexpr double kRegionHalfExtent = 1.1;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty or same length as points
  double frame_scale = 1.0;   // metres per normalized unit

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
};

/// Contact locations Q plus reaction force u (Newtons). `indices` refer to
/// the nominal cloud the locations were taken from, when known.
struct ContactObservation {
  PointCloud locations;
  Vec3 reaction = Vec3::Zero();
  std::vector<Index> indices;
};

/// Maps original coordinates to normalized ones: y = (x + translation) * scale.
struct Transform {
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return (x + translation) * scale; }
  Vec3 invert(const Vec3& y) const { return y / scale - translation; }
};

inline void validate(const PointCloud& cloud) {
  for (const auto& p : cloud.points)
    require(p.allFinite(), ErrorKind::kInvalidInput, "point cloud holds a non-finite coordinate");
  if (cloud.has_normals()) {
    require(cloud.normals.size() == cloud.points.size(), ErrorKind::kInvalidInput,
            "normals and points differ in length");
    for (const auto& n : cloud.normals)
      require(std::abs(n.norm() - 1.0) <= 1e-6, ErrorKind::kInvalidInput,
              "point cloud normal is not unit length");
  }
}

inline Vec3 centroid(std::span<const Vec3> points) {
  require(!points.empty(), ErrorKind::kInvalidInput, "centroid of an empty set");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  return c / static_cast<double>(points.size());
}

/// Centers the cloud at its centroid and scales it into the unit ball.
/// frame_scale of the result accumulates the metres-per-unit factor.
inline std::pair<PointCloud, Transform> normalize_cloud(const PointCloud& cloud) {
  require(!cloud.empty(), ErrorKind::kInvalidInput, "cannot normalize an empty cloud");
  validate(cloud);
  Transform tf;
  tf.translation = -centroid(cloud.points);
  double radius = 0.0;
  for (const auto& p : cloud.points) radius = std::max(radius, (p + tf.translation).norm());
  tf.scale = radius > 0.0 ? 1.0 / radius : 1.0;
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(tf.apply(p));
  // Re-center exactly: the scaled mean can drift by rounding.
  const Vec3 drift = centroid(out.points);
  for (auto& p : out.points) p -= drift;
  tf.translation -= drift / tf.scale;
  out.normals = cloud.normals;
  out.frame_scale = cloud.frame_scale / tf.scale;
  return {std::move(out), tf};
}

inline PointCloud apply_transform(const PointCloud& cloud, const Transform& tf) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(tf.apply(p));
  out.normals = cloud.normals;
  out.frame_scale = cloud.frame_scale / tf.scale;
  return out;
}

/// Deterministic random subset (without replacement) of n points, in the
/// order drawn by a seeded shuffle.
inline std::vector<Index> subsample_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  require(n <= size, ErrorKind::kInvalidInput, "subsample size exceeds cloud size");
  std::vector<Index> idx(size);
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

inline PointCloud select(const PointCloud& cloud, std::span<const Index> indices) {
  PointCloud out;
  out.frame_scale = cloud.frame_scale;
  out.points.reserve(indices.size());
  for (Index i : indices) out.points.push_back(cloud.points[static_cast<std::size_t>(i)]);
  if (cloud.has_normals()) {
    out.normals.reserve(indices.size());
    for (Index i : indices) out.normals.push_back(cloud.normals[static_cast<std::size_t>(i)]);
  }
  return out;
}

inline PointCloud subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  const auto idx = subsample_indices(cloud.size(), n, seed);
  return select(cloud, idx);
}

/// Mean distance from each point to its nearest other point.
inline double mean_spacing(std::span<const Vec3> points) {
  require(points.size() >= 2, ErrorKind::kInvalidInput, "spacing needs at least two points");
  KdTree tree(points);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    total += std::sqrt(tree.nearest_excluding(points[i], static_cast<Index>(i)).squared_distance);
  return total / static_cast<double>(points.size());
}

// ---------------------------------------------------------------------------
// Triangle meshes

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  bool watertight_flag = false;

  bool empty() const { return faces.empty(); }
};

inline std::map<std::pair<int, int>, int> edge_face_counts(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) {
      int a = f[static_cast<std::size_t>(e)], b = f[static_cast<std::size_t>((e + 1) % 3)];
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  }
  return counts;
}

/// True when every edge is shared by exactly two faces.
inline bool is_watertight(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) return false;
  for (const auto& [edge, count] : edge_face_counts(mesh))
    if (count != 2) return false;
  return true;
}

/// V - E + F over referenced vertices.
inline long euler_characteristic(const TriangleMesh& mesh) {
  std::vector<char> used(mesh.vertices.size(), 0);
  for (const auto& f : mesh.faces)
    for (int v : f) used[static_cast<std::size_t>(v)] = 1;
  const long v = std::count(used.begin(), used.end(), 1);
  const long e = static_cast<long>(edge_face_counts(mesh).size());
  return v - e + static_cast<long>(mesh.faces.size());
}

inline void validate(const TriangleMesh& mesh) {
  const int n = static_cast<int>(mesh.vertices.size());
  for (const auto& f : mesh.faces)
    for (int v : f)
      require(v >= 0 && v < n, ErrorKind::kInvalidInput, "mesh face index out of range");
  if (mesh.watertight_flag)
    require(is_watertight(mesh), ErrorKind::kInvalidInput,
            "mesh flagged watertight has an edge not shared by exactly two faces");
}

inline Vec3 face_normal_raw(const TriangleMesh& mesh, const std::array<int, 3>& f) {
  const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
  const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
  const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
  return (b - a).cross(c - a);
}

inline double face_area(const TriangleMesh& mesh, const std::array<int, 3>& f) {
  return 0.5 * face_normal_raw(mesh, f).norm();
}

inline double surface_area(const TriangleMesh& mesh) {
  double total = 0.0;
  for (const auto& f : mesh.faces) total += face_area(mesh, f);
  return total;
}

/// Signed volume; positive for outward-oriented closed meshes.
inline double signed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

/// Area-uniform surface samples with face normals.
inline PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  require(!mesh.faces.empty(), ErrorKind::kInvalidInput, "cannot sample an empty mesh");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    total += face_area(mesh, mesh.faces[i]);
    cumulative[i] = total;
  }
  require(total > 0.0, ErrorKind::kInvalidInput, "mesh has zero area");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud out;
  out.points.reserve(n);
  out.normals.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double r = unit(rng) * total;
    auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
    std::size_t fi = static_cast<std::size_t>(std::distance(cumulative.begin(), it));
    fi = std::min(fi, mesh.faces.size() - 1);
    // Skip zero-area faces that lower_bound can land on.
    while (face_area(mesh, mesh.faces[fi]) == 0.0 && fi + 1 < mesh.faces.size()) ++fi;
    const auto& f = mesh.faces[fi];
    double u = unit(rng), v = unit(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    out.points.push_back(a + u * (b - a) + v * (c - a));
    out.normals.push_back(face_normal_raw(mesh, f).normalized());
  }
  return out;
}

}  // namespace defsdf
