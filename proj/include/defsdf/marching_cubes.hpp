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

// Marching cubes over a regular grid. The per-configuration triangulation is
// derived at startup: crossing points on each cube face are joined into
// segments (ambiguous faces keep the negative corners apart, a rule that only
// depends on the face and therefore agrees between neighbouring cells), the
// segments are chained into closed loops, and every loop is fanned into
// triangles facing the positive side.

#include "defsdf/geometry.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <vector>

namespace defsdf {

/// Axis-aligned grid of node values; node (i, j, k) sits at origin + spacing * (i, j, k).
struct FieldGrid {
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::array<int, 3> counts = {2, 2, 2};
  std::vector<double> values;   // scalar field, x fastest
  std::vector<Vec3> vectors;    // optional vector field, same layout

  std::size_t node_count() const {
    return static_cast<std::size_t>(counts[0]) * counts[1] * counts[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(counts[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(counts[1]) * k);
  }
  Vec3 node(int i, int j, int k) const {
    return origin + spacing * Vec3(static_cast<double>(i), static_cast<double>(j),
                                   static_cast<double>(k));
  }
};

inline void validate(const FieldGrid& g) {
  require(g.counts[0] >= 1 && g.counts[1] >= 1 && g.counts[2] >= 1 && g.spacing > 0,
          ErrorKind::kInvalidInput, "grid needs positive counts and spacing");
  require(g.values.empty() || g.values.size() == g.node_count(), ErrorKind::kInvalidInput,
          "grid value count does not match its node count");
  require(g.vectors.empty() || g.vectors.size() == g.node_count(), ErrorKind::kInvalidInput,
          "grid vector count does not match its node count");
  for (double v : g.values) require(std::isfinite(v), ErrorKind::kNumerical, "non-finite grid value");
}

/// Cube [-half, half]^3 sampled with `resolution` nodes per axis.
inline FieldGrid cube_grid(int resolution, double half = kRegionHalfExtent) {
  require(resolution >= 2, ErrorKind::kInvalidInput, "grid resolution must be at least 2");
  FieldGrid g;
  g.origin = Vec3::Constant(-half);
  g.spacing = 2.0 * half / (resolution - 1);
  g.counts = {resolution, resolution, resolution};
  return g;
}

/// Fills g.values with f(node); `threads` > 1 splits z-slabs across threads.
inline void sample_grid(FieldGrid& g, const std::function<double(const Vec3&)>& f,
                        unsigned threads = 1) {
  g.values.assign(g.node_count(), 0.0);
  auto slab = [&](int k0, int k1) {
    for (int k = k0; k < k1; ++k)
      for (int j = 0; j < g.counts[1]; ++j)
        for (int i = 0; i < g.counts[0]; ++i) g.values[g.index(i, j, k)] = f(g.node(i, j, k));
  };
  parallel_slabs(g.counts[2], threads, slab);
}

namespace detail {

// Corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline constexpr std::array<std::array<int, 2>, 12> kCubeEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

// Faces as corner cycles.
inline constexpr std::array<std::array<int, 4>, 6> kCubeFaces = {{
    {0, 2, 6, 4}, {1, 3, 7, 5},  // x = 0, x = 1
    {0, 1, 5, 4}, {2, 3, 7, 6},  // y = 0, y = 1
    {0, 1, 3, 2}, {4, 5, 7, 6},  // z = 0, z = 1
}};

inline int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    const auto& ed = kCubeEdges[static_cast<std::size_t>(e)];
    if ((ed[0] == a && ed[1] == b) || (ed[0] == b && ed[1] == a)) return e;
  }
  return -1;
}

inline Vec3 corner_position(int c) {
  return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1);
}

inline Vec3 edge_midpoint(int e) {
  const auto& ed = kCubeEdges[static_cast<std::size_t>(e)];
  return 0.5 * (corner_position(ed[0]) + corner_position(ed[1]));
}

using CaseTable = std::array<std::vector<std::array<int, 3>>, 256>;

/// Triangles (as cube-edge triples) for every inside/outside configuration;
/// bit c of the case index is set when corner c is negative.
inline CaseTable build_case_table() {
  CaseTable table;
  for (int config = 0; config < 256; ++config) {
    auto negative = [config](int c) { return ((config >> c) & 1) != 0; };
    std::array<std::vector<int>, 12> links;  // edge -> edges joined by a face segment
    for (const auto& face : kCubeFaces) {
      std::vector<int> crossing;
      for (int s = 0; s < 4; ++s) {
        const int a = face[static_cast<std::size_t>(s)];
        const int b = face[static_cast<std::size_t>((s + 1) % 4)];
        if (negative(a) != negative(b)) crossing.push_back(edge_between(a, b));
      }
      if (crossing.size() == 2) {
        links[static_cast<std::size_t>(crossing[0])].push_back(crossing[1]);
        links[static_cast<std::size_t>(crossing[1])].push_back(crossing[0]);
      } else if (crossing.size() == 4) {
        // Ambiguous face: cut off each negative corner on its own.
        for (int s = 0; s < 4; ++s) {
          const int c = face[static_cast<std::size_t>(s)];
          if (!negative(c)) continue;
          const int prev = face[static_cast<std::size_t>((s + 3) % 4)];
          const int next = face[static_cast<std::size_t>((s + 1) % 4)];
          const int e0 = edge_between(prev, c), e1 = edge_between(c, next);
          links[static_cast<std::size_t>(e0)].push_back(e1);
          links[static_cast<std::size_t>(e1)].push_back(e0);
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (used[static_cast<std::size_t>(start)] || links[static_cast<std::size_t>(start)].empty())
        continue;
      std::vector<int> loop = {start};
      used[static_cast<std::size_t>(start)] = true;
      int prev = -1, cur = start;
      while (true) {
        const auto& nb = links[static_cast<std::size_t>(cur)];
        const int next = nb[0] != prev ? nb[0] : nb[1];
        if (next == start) break;
        loop.push_back(next);
        used[static_cast<std::size_t>(next)] = true;
        prev = cur;
        cur = next;
      }
      // Outward direction: sum over the loop's edges of negative -> positive corner.
      Vec3 outward = Vec3::Zero();
      for (int e : loop) {
        const auto& ed = kCubeEdges[static_cast<std::size_t>(e)];
        const Vec3 d = corner_position(ed[1]) - corner_position(ed[0]);
        outward += negative(ed[0]) ? d : -d;
      }
      Vec3 newell = Vec3::Zero();
      for (std::size_t i = 0; i < loop.size(); ++i) {
        const Vec3 a = edge_midpoint(loop[i]);
        const Vec3 b = edge_midpoint(loop[(i + 1) % loop.size()]);
        newell += a.cross(b);
      }
      if (newell.dot(outward) < 0) std::reverse(loop.begin(), loop.end());
      for (std::size_t i = 1; i + 1 < loop.size(); ++i) table[static_cast<std::size_t>(config)].push_back({loop[0], loop[i], loop[i + 1]});
    }
  }
  return table;
}

inline const CaseTable& case_table() {
  static const CaseTable table = build_case_table();
  return table;
}

}  // namespace detail

/// Extracts the `iso` level set; values below iso are inside. Triangles face
/// the outside and vertices are shared between cells through their grid edge.
inline TriangleMesh marching_cubes(const FieldGrid& g, double iso = 0.0,
                                   double min_area = 1e-12) {
  validate(g);
  require(g.counts[0] >= 2 && g.counts[1] >= 2 && g.counts[2] >= 2, ErrorKind::kInvalidInput,
          "marching cubes needs at least two nodes per axis");
  require(g.values.size() == g.node_count(), ErrorKind::kInvalidInput, "grid has no scalar values");
  const auto& table = detail::case_table();
  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> vertex_of_edge;

  auto grid_edge_vertex = [&](int i, int j, int k, int cube_edge) -> int {
    const auto& ed = detail::kCubeEdges[static_cast<std::size_t>(cube_edge)];
    const int a = ed[0], b = ed[1];
    const int ia = i + (a & 1), ja = j + ((a >> 1) & 1), ka = k + ((a >> 2) & 1);
    const int axis = cube_edge / 4;
    const std::uint64_t key = static_cast<std::uint64_t>(g.index(ia, ja, ka)) * 3 + axis;
    auto it = vertex_of_edge.find(key);
    if (it != vertex_of_edge.end()) return it->second;
    const int ib = i + (b & 1), jb = j + ((b >> 1) & 1), kb = k + ((b >> 2) & 1);
    const double va = g.values[g.index(ia, ja, ka)] - iso;
    const double vb = g.values[g.index(ib, jb, kb)] - iso;
    const double t = va / (va - vb);
    const Vec3 pa = g.node(ia, ja, ka), pb = g.node(ib, jb, kb);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    vertex_of_edge.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < g.counts[2]; ++k) {
    for (int j = 0; j + 1 < g.counts[1]; ++j) {
      for (int i = 0; i + 1 < g.counts[0]; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          const double v = g.values[g.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
          if (v < iso) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;
        for (const auto& tri : table[static_cast<std::size_t>(config)]) {
          const std::array<int, 3> f = {grid_edge_vertex(i, j, k, tri[0]),
                                        grid_edge_vertex(i, j, k, tri[1]),
                                        grid_edge_vertex(i, j, k, tri[2])};
          if (face_area(mesh, f) > min_area) mesh.faces.push_back(f);
        }
      }
    }
  }
  require(!mesh.faces.empty(), ErrorKind::kEmptySurface, "field has no zero crossing on the grid");
  mesh.watertight_flag = is_watertight(mesh);
  return mesh;
}

}  // namespace defsdf
