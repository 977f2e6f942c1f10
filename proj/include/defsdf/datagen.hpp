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

// Synthetic deformable-tool dataset. Tools are lofted along +x from the
// grasped handle end (x = 0) to the tip; the clamped fixture covers
// x <= fixture_length. Deformations follow Euler-Bernoulli cantilever
// kinematics with a rigid cross-section, so every sample has a closed-form
// ground truth.

#include "defsdf/geometry.hpp"
#include "defsdf/io.hpp"
#include "defsdf/kdtree.hpp"
#include "defsdf/sdf_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace defsdf {

struct ToolSpec {
  std::string name = "tool";
  double handle_length = 0.15;
  double handle_radius = 0.01;
  double transition_length = 0.01;
  double blade_length = 0.10;
  double blade_width = 0.08;
  double blade_thickness = 0.002;
  double youngs_modulus = 2.0e9;  // Pa
  double fixture_length = 0.05;   // clamped span from the handle end
  int section_vertices = 32;      // per cross-section, multiple of 4
  double station_spacing = 0.005;

  double total_length() const { return handle_length + transition_length + blade_length; }
  double cantilever_length() const { return total_length() - fixture_length; }

  /// Second moment of area of the blade section for deflection along z
  /// (bending about y) and along y (bending about z).
  double second_moment_z() const { return blade_width * std::pow(blade_thickness, 3) / 12.0; }
  double second_moment_y() const { return blade_thickness * std::pow(blade_width, 3) / 12.0; }
  double rigidity_z() const { return youngs_modulus * second_moment_z(); }
  double rigidity_y() const { return youngs_modulus * second_moment_y(); }
};

inline void validate(const ToolSpec& s) {
  const bool dims = s.handle_length > 0 && s.handle_radius > 0 && s.transition_length > 0 &&
                    s.blade_length > 0 && s.blade_width > 0 && s.blade_thickness > 0;
  require(dims, ErrorKind::kInvalidSpec, "tool '" + s.name + "' has a non-positive dimension");
  require(s.youngs_modulus > 0, ErrorKind::kInvalidSpec, "Young's modulus must be positive");
  require(s.fixture_length > 0 && s.fixture_length < s.total_length(), ErrorKind::kInvalidSpec,
          "fixture must cover part of the tool");
  require(s.section_vertices >= 8 && s.section_vertices % 4 == 0, ErrorKind::kInvalidSpec,
          "section_vertices must be a multiple of 4 and at least 8");
  require(s.station_spacing > 0, ErrorKind::kInvalidSpec, "station_spacing must be positive");
}

struct BoundaryCondition {
  Vec3 load_point = Vec3::Zero();
  Vec3 load_vector = Vec3::Zero();  // Newtons
  double contact_radius = 0.01;
};

struct DeformationSample {
  std::string tool_id;
  int condition = -1;
  PointCloud nominal_cloud;
  PointCloud deformed_cloud;  // index-aligned with nominal_cloud
  ContactObservation contacts;
  SdfSampleSet sdf_samples;
  BoundaryCondition bc;
};

// ---------------------------------------------------------------------------
// Beam kinematics

/// Lateral deflection at axial station xi of a clamped cantilever loaded by
/// force F at station a (stations measured from the clamp).
inline double cantilever_deflection(double xi, double a, double force, double rigidity) {
  if (xi <= 0.0) return 0.0;
  if (xi <= a) return force * xi * xi * (3.0 * a - xi) / (6.0 * rigidity);
  return force * a * a * (3.0 * xi - a) / (6.0 * rigidity);
}

/// d(deflection)/d(xi).
inline double cantilever_slope(double xi, double a, double force, double rigidity) {
  if (xi <= 0.0) return 0.0;
  if (xi <= a) return force * xi * (2.0 * a - xi) / (2.0 * rigidity);
  return force * a * a / (2.0 * rigidity);
}

/// Lateral displacement (0, dy, dz) of a point at axial position x.
inline Vec3 beam_displacement(const ToolSpec& spec, const BoundaryCondition& bc, double x) {
  const double xi = x - spec.fixture_length;
  const double a = bc.load_point.x() - spec.fixture_length;
  return {0.0, cantilever_deflection(xi, a, bc.load_vector.y(), spec.rigidity_y()),
          cantilever_deflection(xi, a, bc.load_vector.z(), spec.rigidity_z())};
}

inline Vec3 beam_slope(const ToolSpec& spec, const BoundaryCondition& bc, double x) {
  const double xi = x - spec.fixture_length;
  const double a = bc.load_point.x() - spec.fixture_length;
  return {0.0, cantilever_slope(xi, a, bc.load_vector.y(), spec.rigidity_y()),
          cantilever_slope(xi, a, bc.load_vector.z(), spec.rigidity_z())};
}

// ---------------------------------------------------------------------------
// Nominal geometry

namespace detail {

/// One quadrant of a section outline from (+y, 0) to (0, +z), m+1 points.
inline std::vector<Eigen::Vector2d> quadrant_rectangle(double half_w, double half_t, int m) {
  int m1 = static_cast<int>(std::lround(m * half_t / (half_t + half_w)));
  m1 = std::clamp(m1, 1, m - 1);
  const int m2 = m - m1;
  std::vector<Eigen::Vector2d> q;
  for (int i = 0; i < m1; ++i) q.emplace_back(half_w, half_t * i / m1);
  for (int i = 0; i <= m2; ++i) q.emplace_back(half_w * (1.0 - static_cast<double>(i) / m2), half_t);
  return q;
}

inline std::vector<Eigen::Vector2d> quadrant_circle(double r, int m) {
  std::vector<Eigen::Vector2d> q;
  for (int i = 0; i <= m; ++i) {
    const double th = 0.5 * std::numbers::pi * i / m;
    q.emplace_back(r * std::cos(th), r * std::sin(th));
  }
  return q;
}

/// Full counter-clockwise outline (viewed from +x) by mirroring a quadrant.
inline std::vector<Eigen::Vector2d> mirror_quadrant(const std::vector<Eigen::Vector2d>& q) {
  const int m = static_cast<int>(q.size()) - 1;
  std::vector<Eigen::Vector2d> out;
  out.reserve(static_cast<std::size_t>(4 * m));
  for (int i = 0; i < m; ++i) out.push_back(q[static_cast<std::size_t>(i)]);
  for (int i = 0; i < m; ++i) {
    const auto& p = q[static_cast<std::size_t>(m - i)];
    out.emplace_back(-p.x(), p.y());
  }
  for (int i = 0; i < m; ++i) {
    const auto& p = q[static_cast<std::size_t>(i)];
    out.emplace_back(-p.x(), -p.y());
  }
  for (int i = 0; i < m; ++i) {
    const auto& p = q[static_cast<std::size_t>(m - i)];
    out.emplace_back(p.x(), -p.y());
  }
  return out;
}

}  // namespace detail

/// Lofted watertight mesh of the tool (outward winding) and a surface cloud
/// with outward normals at the requested density (points per square metre).
inline std::pair<TriangleMesh, PointCloud> build_nominal(const ToolSpec& spec,
                                                         double surface_density,
                                                         std::uint64_t seed = 0) {
  validate(spec);
  require(surface_density > 0, ErrorKind::kInvalidSpec, "surface density must be positive");
  const int m = spec.section_vertices / 4;
  const auto circle = detail::mirror_quadrant(detail::quadrant_circle(spec.handle_radius, m));
  const auto blade = detail::mirror_quadrant(
      detail::quadrant_rectangle(0.5 * spec.blade_width, 0.5 * spec.blade_thickness, m));

  struct Station {
    double x;
    double mix;  // 0 = handle circle, 1 = blade rectangle
  };
  std::vector<Station> stations;
  auto add_span = [&](double x0, double x1, double mix0, double mix1, bool include_end) {
    const int n = std::max(1, static_cast<int>(std::ceil((x1 - x0) / spec.station_spacing)));
    for (int i = 0; i < n + (include_end ? 1 : 0); ++i) {
      const double t = static_cast<double>(i) / n;
      stations.push_back({x0 + t * (x1 - x0), mix0 + t * (mix1 - mix0)});
    }
  };
  const double x_h = spec.handle_length;
  const double x_b = x_h + spec.transition_length;
  add_span(0.0, x_h, 0.0, 0.0, false);
  add_span(x_h, x_b, 0.0, 1.0, false);
  add_span(x_b, spec.total_length(), 1.0, 1.0, true);

  TriangleMesh mesh;
  const int k = spec.section_vertices;
  for (const auto& s : stations) {
    for (int j = 0; j < k; ++j) {
      const auto& c = circle[static_cast<std::size_t>(j)];
      const auto& b = blade[static_cast<std::size_t>(j)];
      const Eigen::Vector2d p = (1.0 - s.mix) * c + s.mix * b;
      mesh.vertices.emplace_back(s.x, p.x(), p.y());
    }
  }
  const int n_st = static_cast<int>(stations.size());
  auto vid = [k](int s, int j) { return s * k + (j % k); };
  for (int s = 0; s + 1 < n_st; ++s) {
    for (int j = 0; j < k; ++j) {
      mesh.faces.push_back({vid(s, j), vid(s, j + 1), vid(s + 1, j)});
      mesh.faces.push_back({vid(s, j + 1), vid(s + 1, j + 1), vid(s + 1, j)});
    }
  }
  const int c0 = static_cast<int>(mesh.vertices.size());
  mesh.vertices.emplace_back(0.0, 0.0, 0.0);
  const int c1 = c0 + 1;
  mesh.vertices.emplace_back(spec.total_length(), 0.0, 0.0);
  for (int j = 0; j < k; ++j) {
    mesh.faces.push_back({c0, vid(0, j + 1), vid(0, j)});
    mesh.faces.push_back({c1, vid(n_st - 1, j), vid(n_st - 1, j + 1)});
  }
  mesh.watertight_flag = is_watertight(mesh);
  require(mesh.watertight_flag, ErrorKind::kInvalidSpec, "lofted tool mesh is not watertight");

  const auto n_points =
      static_cast<std::size_t>(std::max(1.0, std::round(surface_area(mesh) * surface_density)));
  PointCloud cloud = sample_surface(mesh, n_points, seed);
  return {std::move(mesh), std::move(cloud)};
}

// ---------------------------------------------------------------------------
// Deformation

/// Applies the cantilever deflection of `bc` to the nominal (metric) cloud.
/// `regime_limit` bounds the peak deflection as a fraction of the cantilever length.
inline DeformationSample deform(const ToolSpec& spec, const PointCloud& nominal,
                                const BoundaryCondition& bc, double regime_limit = 0.1) {
  validate(spec);
  require(!nominal.empty() && nominal.has_normals(), ErrorKind::kInvalidInput,
          "deformation needs a nominal cloud with normals");
  require(bc.contact_radius > 0, ErrorKind::kInvalidInput, "contact radius must be positive");
  require(bc.load_vector.allFinite() && bc.load_point.allFinite(), ErrorKind::kInvalidInput,
          "non-finite boundary condition");
  require(std::abs(bc.load_vector.x()) <= 1e-12 * std::max(1.0, bc.load_vector.norm()),
          ErrorKind::kInvalidInput, "load must act in the plane normal to the tool axis");

  DeformationSample out;
  out.bc = bc;
  out.nominal_cloud = nominal;

  // Q: every nominal point inside the contact patch.
  for (std::size_t i = 0; i < nominal.size(); ++i) {
    if ((nominal.points[i] - bc.load_point).norm() <= bc.contact_radius) {
      out.contacts.indices.push_back(static_cast<Index>(i));
      out.contacts.locations.points.push_back(nominal.points[i]);
    }
  }
  require(!out.contacts.indices.empty(), ErrorKind::kInvalidInput,
          "load point is off the nominal surface (no surface point within the contact radius)");
  out.contacts.locations.frame_scale = nominal.frame_scale;
  out.contacts.reaction = -bc.load_vector;

  const bool loaded = bc.load_vector.squaredNorm() > 0.0;
  if (loaded) {
    require(bc.load_point.x() > spec.fixture_length, ErrorKind::kInvalidInput,
            "load point lies inside the clamped fixture");
    const double peak = beam_displacement(spec, bc, spec.total_length()).norm();
    require(peak < regime_limit * spec.cantilever_length(), ErrorKind::kRegime,
            "load leaves the small-deflection regime (tip deflection " + std::to_string(peak) +
                " m)");
  }

  out.deformed_cloud.frame_scale = nominal.frame_scale;
  out.deformed_cloud.points.reserve(nominal.size());
  out.deformed_cloud.normals.reserve(nominal.size());
  for (std::size_t i = 0; i < nominal.size(); ++i) {
    const Vec3& p = nominal.points[i];
    const Vec3& n = nominal.normals[i];
    if (!loaded) {
      out.deformed_cloud.points.push_back(p);
      out.deformed_cloud.normals.push_back(n);
      continue;
    }
    out.deformed_cloud.points.push_back(p + beam_displacement(spec, bc, p.x()));
    // Normals transform with the inverse transpose of I + slope * x^T.
    const Vec3 slope = beam_slope(spec, bc, p.x());
    out.deformed_cloud.normals.push_back((n - Vec3::UnitX() * slope.dot(n)).normalized());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct DatasetOptions {
  double surface_density = 1.2e5;  // points per square metre
  std::size_t sdf_samples = 25000;
  SdfSamplingOptions sampling;     // n_total and seed are overridden per record
  double contact_radius = 0.01;
  double min_force = 0.5;          // N, log-uniform lower bound
  double max_force = 5.0;
  double min_load_station = 0.4;   // fraction of the cantilever span
  int holdout_per_tool = 0;
};

struct ToolRecord {
  std::string id;
  ToolSpec spec;
  Transform transform;        // metric -> normalized
  PointCloud nominal_cloud;   // normalized
  SdfSampleSet nominal_sdf;   // normalized
  TriangleMesh nominal_mesh;  // normalized
};

struct DeformationRecord {
  std::string tool_id;
  int tool_index = -1;
  int condition = -1;
  std::string split = "train";
  PointCloud deformed_cloud;  // normalized, index-aligned with the tool's nominal cloud
  SdfSampleSet sdf;           // normalized
  ContactObservation contacts;  // locations normalized, reaction in Newtons
  double max_deflection = 0.0;  // normalized units
};

struct Dataset {
  std::vector<ToolRecord> tools;
  std::vector<DeformationRecord> deformations;

  int tool_index(const std::string& id) const {
    for (std::size_t i = 0; i < tools.size(); ++i)
      if (tools[i].id == id) return static_cast<int>(i);
    return -1;
  }
};

inline io::Json to_json(const ToolSpec& s) {
  return {{"name", s.name},
          {"handle_length", s.handle_length},
          {"handle_radius", s.handle_radius},
          {"transition_length", s.transition_length},
          {"blade_length", s.blade_length},
          {"blade_width", s.blade_width},
          {"blade_thickness", s.blade_thickness},
          {"youngs_modulus", s.youngs_modulus},
          {"fixture_length", s.fixture_length},
          {"section_vertices", s.section_vertices},
          {"station_spacing", s.station_spacing}};
}

inline ToolSpec tool_spec_from_json(const io::Json& j) {
  ToolSpec s;
  s.name = j.value("name", s.name);
  s.handle_length = j.value("handle_length", s.handle_length);
  s.handle_radius = j.value("handle_radius", s.handle_radius);
  s.transition_length = j.value("transition_length", s.transition_length);
  s.blade_length = j.value("blade_length", s.blade_length);
  s.blade_width = j.value("blade_width", s.blade_width);
  s.blade_thickness = j.value("blade_thickness", s.blade_thickness);
  s.youngs_modulus = j.value("youngs_modulus", s.youngs_modulus);
  s.fixture_length = j.value("fixture_length", s.fixture_length);
  s.section_vertices = j.value("section_vertices", s.section_vertices);
  s.station_spacing = j.value("station_spacing", s.station_spacing);
  return s;
}

/// Draws one boundary condition: load point on the free span, direction in
/// the plane normal to the axis, magnitude log-uniform.
inline BoundaryCondition sample_condition(const ToolSpec& spec, const PointCloud& nominal,
                                          const DatasetOptions& opt, Rng& rng) {
  std::vector<std::size_t> candidates;
  const double x0 = spec.fixture_length + opt.min_load_station * spec.cantilever_length();
  for (std::size_t i = 0; i < nominal.size(); ++i)
    if (nominal.points[i].x() >= x0) candidates.push_back(i);
  require(!candidates.empty(), ErrorKind::kInvalidSpec, "no surface point on the loadable span");
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> logf(std::log(opt.min_force), std::log(opt.max_force));
  BoundaryCondition bc;
  bc.load_point = nominal.points[candidates[pick(rng)]];
  const double th = angle(rng);
  bc.load_vector = std::exp(logf(rng)) * Vec3(0.0, std::cos(th), std::sin(th));
  bc.contact_radius = opt.contact_radius;
  return bc;
}

namespace detail {

inline io::Json vec_json(const Vec3& v) { return io::Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const io::Json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

/// Conditions to hold out: evenly spread through the interior of the
/// deflection-sorted order, so held-out samples stay inside the training range.
inline std::vector<int> holdout_conditions(const std::vector<double>& deflections, int count) {
  const int n = static_cast<int>(deflections.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return deflections[static_cast<std::size_t>(a)] < deflections[static_cast<std::size_t>(b)];
  });
  std::vector<int> out;
  count = std::min(count, std::max(0, n - 2));
  for (int h = 0; h < count; ++h) {
    const int rank = 1 + static_cast<int>(std::lround((h + 1.0) * (n - 1.0) / (count + 1.0))) - 1;
    out.push_back(order[static_cast<std::size_t>(std::clamp(rank, 1, n - 2))]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// Generates every tool's nominal record and `n_conditions` deformation
/// records under `out_dir`; returns the manifest that was written.
inline io::Json generate_dataset(const std::vector<ToolSpec>& specs, int n_conditions,
                                 std::uint64_t seed, const io::fs::path& out_dir,
                                 const DatasetOptions& opt = {}) {
  require(n_conditions >= 1, ErrorKind::kInvalidInput, "n_conditions must be at least 1");
  require(!specs.empty(), ErrorKind::kInvalidInput, "no tool specs given");
  io::ensure_directory(out_dir);

  io::Json manifest;
  manifest["format"] = "defsdf-dataset";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["n_conditions"] = n_conditions;
  manifest["sdf_samples"] = opt.sdf_samples;
  manifest["tools"] = io::Json::array();
  manifest["records"] = io::Json::array();

  for (std::size_t t = 0; t < specs.size(); ++t) {
    const ToolSpec& spec = specs[t];
    const std::string id = spec.name;
    const std::uint64_t tool_seed = derive_seed(seed, t);
    auto [mesh, cloud] = build_nominal(spec, opt.surface_density, derive_seed(tool_seed, 1));
    auto [normalized, tf] = normalize_cloud(cloud);

    SdfSamplingOptions so = opt.sampling;
    so.n_total = opt.sdf_samples;
    so.seed = derive_seed(tool_seed, 2);
    const SdfSampleSet nominal_sdf = sample_sdf(normalized, so);

    TriangleMesh mesh_n = mesh;
    for (auto& v : mesh_n.vertices) v = tf.apply(v);

    const io::fs::path tool_dir = out_dir / "tools" / id;
    io::ensure_directory(tool_dir);
    io::write_ply(tool_dir / "nominal.ply", mesh_n);
    {
      io::ArrayWriter w(tool_dir);
      io::add_cloud(w, "", "nominal.bin", normalized);
      io::add_sdf(w, "sdf_", "nominal_sdf.bin", nominal_sdf);
      w.meta()["translation"] = detail::vec_json(tf.translation);
      w.meta()["scale"] = tf.scale;
      w.finish();
    }

    io::Json tool_entry = {{"id", id},
                           {"spec", to_json(spec)},
                           {"translation", detail::vec_json(tf.translation)},
                           {"scale", tf.scale},
                           {"frame_scale", normalized.frame_scale}};
    manifest["tools"].push_back(tool_entry);
    manifest["records"].push_back({{"kind", "nominal"},
                                   {"tool_id", id},
                                   {"dir", "tools/" + id},
                                   {"mesh", "tools/" + id + "/nominal.ply"},
                                   {"cloud", "tools/" + id + "/nominal.bin"},
                                   {"sdf", "tools/" + id + "/nominal_sdf.bin"}});

    Rng rng(derive_seed(tool_seed, 3));
    std::vector<io::Json> entries;
    std::vector<double> deflections;
    for (int k = 0; k < n_conditions; ++k) {
      std::optional<DeformationSample> sample;
      for (int attempt = 0; attempt < 100 && !sample; ++attempt) {
        try {
          sample = deform(spec, cloud, sample_condition(spec, cloud, opt, rng));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kRegime) throw;
        }
      }
      require(sample.has_value(), ErrorKind::kInvalidSpec,
              "tool '" + id + "' cannot be loaded inside the small-deflection regime");

      PointCloud deformed = apply_transform(sample->deformed_cloud, tf);
      so.seed = derive_seed(tool_seed, 100 + static_cast<std::uint64_t>(k));
      const SdfSampleSet sdf = sample_sdf(deformed, so);
      double max_def = 0.0;
      for (std::size_t i = 0; i < deformed.size(); ++i)
        max_def = std::max(max_def, (deformed.points[i] - normalized.points[i]).norm());
      deflections.push_back(max_def);

      const std::string rel = "tools/" + id + "/def_" + std::to_string(k);
      const io::fs::path dir = out_dir / rel;
      {
        io::ArrayWriter w(dir);
        io::add_cloud(w, "", "cloud.bin", deformed);
        io::add_sdf(w, "sdf_", "sdf.bin", sdf);
        w.finish();
      }
      io::Json contacts = {{"indices", sample->contacts.indices},
                           {"u", detail::vec_json(sample->contacts.reaction)},
                           {"load_point", detail::vec_json(tf.apply(sample->bc.load_point))},
                           {"load_vector", detail::vec_json(sample->bc.load_vector)},
                           {"contact_radius", sample->bc.contact_radius}};
      io::write_json(dir / "contacts.json", contacts);
      entries.push_back({{"kind", "deformed"},
                         {"tool_id", id},
                         {"condition", k},
                         {"dir", rel},
                         {"cloud", rel + "/cloud.bin"},
                         {"sdf", rel + "/sdf.bin"},
                         {"contacts", rel + "/contacts.json"},
                         {"max_deflection", max_def},
                         {"split", "train"}});
    }
    for (int k : detail::holdout_conditions(deflections, opt.holdout_per_tool))
      entries[static_cast<std::size_t>(k)]["split"] = "test";
    for (auto& e : entries) manifest["records"].push_back(std::move(e));
  }
  io::write_json(out_dir / "manifest.json", manifest);
  return manifest;
}

/// Loads a dataset written by generate_dataset.
inline Dataset load_dataset(const io::fs::path& dir) {
  const io::fs::path manifest_path = dir / "manifest.json";
  require(io::fs::exists(manifest_path), ErrorKind::kInvalidDataset,
          "dataset manifest not found: " + manifest_path.string());
  const io::Json manifest = io::read_json(manifest_path);
  Dataset ds;
  try {
    for (const auto& t : manifest.at("tools")) {
      ToolRecord tr;
      tr.id = t.at("id").get<std::string>();
      tr.spec = tool_spec_from_json(t.at("spec"));
      tr.transform.translation = detail::json_vec(t.at("translation"));
      tr.transform.scale = t.at("scale").get<double>();
      const io::ArrayReader r(dir / "tools" / tr.id);
      tr.nominal_cloud = io::read_cloud(r, "");
      tr.nominal_sdf = io::read_sdf(r, "sdf_");
      tr.nominal_mesh = io::read_ply(dir / "tools" / tr.id / "nominal.ply");
      ds.tools.push_back(std::move(tr));
    }
    for (const auto& rec : manifest.at("records")) {
      if (rec.at("kind") != "deformed") continue;
      DeformationRecord dr;
      dr.tool_id = rec.at("tool_id").get<std::string>();
      dr.tool_index = ds.tool_index(dr.tool_id);
      require(dr.tool_index >= 0, ErrorKind::kInvalidDataset,
              "record references unknown tool " + dr.tool_id);
      dr.condition = rec.at("condition").get<int>();
      dr.split = rec.value("split", "train");
      dr.max_deflection = rec.value("max_deflection", 0.0);
      const io::fs::path rdir = dir / rec.at("dir").get<std::string>();
      const io::ArrayReader r(rdir);
      dr.deformed_cloud = io::read_cloud(r, "");
      dr.sdf = io::read_sdf(r, "sdf_");
      const io::Json c = io::read_json(rdir / "contacts.json");
      const auto& tool = ds.tools[static_cast<std::size_t>(dr.tool_index)];
      dr.contacts.indices = c.at("indices").get<std::vector<Index>>();
      dr.contacts.reaction = detail::json_vec(c.at("u"));
      dr.contacts.locations.frame_scale = tool.nominal_cloud.frame_scale;
      for (Index i : dr.contacts.indices) {
        require(i >= 0 && static_cast<std::size_t>(i) < tool.nominal_cloud.size(),
                ErrorKind::kInvalidDataset, "contact index outside the nominal cloud");
        dr.contacts.locations.points.push_back(tool.nominal_cloud.points[static_cast<std::size_t>(i)]);
      }
      require(dr.deformed_cloud.size() == tool.nominal_cloud.size(), ErrorKind::kInvalidDataset,
              "deformed cloud of " + dr.tool_id + " is not index-aligned with its nominal cloud");
      ds.deformations.push_back(std::move(dr));
    }
  } catch (const io::Json::exception& e) {
    fail(ErrorKind::kInvalidDataset, std::string("malformed dataset manifest: ") + e.what());
  }
  return ds;
}

}  // namespace defsdf
