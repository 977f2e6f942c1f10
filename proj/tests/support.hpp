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

// Shared fixtures and independent reference implementations for the tests.

#include "defsdf/defsdf.hpp"

#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace defsdf::testing {

/// Exhaustive O(N^2) chamfer distance, written without the kd-tree.
inline double reference_chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        const double dx = p.x() - q.x(), dy = p.y() - q.y(), dz = p.z() - q.z();
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

inline std::vector<Vec3> random_points(std::size_t n, Rng& rng, double half = 1.0) {
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vec3> out(n);
  for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

/// Fibonacci-lattice sphere cloud with outward normals.
inline PointCloud sphere_cloud(std::size_t n, double radius, const Vec3& centre = Vec3::Zero()) {
  PointCloud c;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - y * y);
    const double phi = golden * static_cast<double>(i);
    const Vec3 d(r * std::cos(phi), y, r * std::sin(phi));
    c.points.push_back(centre + radius * d);
    c.normals.push_back(d);
  }
  return c;
}

/// Grid-sampled surface of the axis-aligned box [-h, h] with face normals.
inline PointCloud box_cloud(const Vec3& h, int per_edge) {
  PointCloud c;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int side = -1; side <= 1; side += 2) {
      for (int i = 0; i < per_edge; ++i) {
        for (int j = 0; j < per_edge; ++j) {
          Vec3 p, n = Vec3::Zero();
          p[axis] = side * h[axis];
          p[a1] = -h[a1] + 2.0 * h[a1] * (i + 0.5) / per_edge;
          p[a2] = -h[a2] + 2.0 * h[a2] * (j + 0.5) / per_edge;
          n[axis] = side;
          c.points.push_back(p);
          c.normals.push_back(n);
        }
      }
    }
  }
  return c;
}

inline double box_sdf(const Vec3& p, const Vec3& h) {
  const Vec3 q = p.cwiseAbs() - h;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

/// Sample set with analytic sphere distances; surface rows carry normals.
inline SdfSampleSet sphere_samples(std::size_t n_surface, std::size_t n_off, double radius,
                                   std::uint64_t seed, const Vec3& centre = Vec3::Zero()) {
  SdfSampleSet s;
  Rng rng(seed);
  const PointCloud surf = sphere_cloud(n_surface, radius, centre);
  for (std::size_t i = 0; i < surf.size(); ++i)
    s.push(surf.points[i], 0.0, true, surf.normals[i], static_cast<Index>(i));
  for (const auto& p : random_points(n_off, rng, 0.9)) s.push(p, (p - centre).norm() - radius, false);
  return s;
}

inline FieldConfig small_config() {
  FieldConfig c;
  c.hidden_width = 16;
  c.hidden_layers = 2;
  c.hyper_hidden = 16;
  c.object_code_dim = 4;
  c.force_code_dim = 8;
  c.encoder_point_hidden = 16;
  c.contact_feature_dim = 24;
  c.encoder_fusion_hidden = 16;
  return c;
}

inline FieldModel small_model(std::uint64_t seed = 1) {
  return init_model(small_config(), {"a", "b"}, {{"a", 0}, {"a", 1}, {"b", -1}}, seed);
}

inline ContactObservation contact_patch(const PointCloud& cloud, std::size_t start, std::size_t n,
                                        const Vec3& reaction) {
  ContactObservation obs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = (start + i) % cloud.size();
    obs.indices.push_back(static_cast<Index>(k));
    obs.locations.points.push_back(cloud.points[k]);
  }
  obs.reaction = reaction;
  return obs;
}

/// Small, stiff tool that keeps generated datasets tiny.
inline ToolSpec tiny_tool(const std::string& name) {
  ToolSpec s;
  s.name = name;
  s.handle_length = 0.06;
  s.handle_radius = 0.01;
  s.blade_length = 0.05;
  s.blade_width = 0.03;
  s.blade_thickness = 0.006;
  s.youngs_modulus = 2.5e8;
  s.fixture_length = 0.03;
  s.section_vertices = 8;
  s.station_spacing = 0.01;
  return s;
}

inline DatasetOptions tiny_options() {
  DatasetOptions o;
  o.surface_density = 4e4;
  o.sdf_samples = 300;
  o.min_force = 0.5;
  o.max_force = 2.0;
  o.contact_radius = 0.012;
  o.holdout_per_tool = 1;
  return o;
}


/// Two tiny tools with three conditions each, generated once per process.
inline const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    const auto dir = io::fs::temp_directory_path() / "defsdf_test_tiny_dataset";
    io::fs::remove_all(dir);
    generate_dataset({tiny_tool("a"), tiny_tool("b")}, 3, 11, dir, tiny_options());
    return load_dataset(dir);
  }();
  return ds;
}

inline TrainConfig tiny_train_config() {
  TrainConfig c;
  c.field = small_config();
  c.seed = 3;
  c.pretrain_epochs = 40;
  c.deform_epochs = 15;
  c.batch_queries = 128;
  c.correction_points = 64;
  c.lr_network = 1e-3;
  c.lr_codes = 1e-2;
  return c;
}

/// A model trained on the tiny dataset, shared by the tests of one binary.
inline const TrainState& tiny_trained() {
  static const TrainState st = [] {
    const TrainConfig c = tiny_train_config();
    return train_deformed(pretrain_nominal(tiny_dataset(), c), tiny_dataset(), c);
  }();
  return st;
}

}  // namespace defsdf::testing
