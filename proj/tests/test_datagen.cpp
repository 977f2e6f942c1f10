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

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

namespace defsdf {
namespace {

ToolSpec spatula() {
  ToolSpec s;
  s.name = "spatula";
  s.handle_length = 0.15;
  s.blade_length = 0.10;
  s.blade_width = 0.08;
  s.blade_thickness = 0.002;
  s.section_vertices = 16;
  return s;
}

std::string slurp(const io::fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// --- beam model ------------------------------------------------------------

TEST(Beam, TipDeflectionClosedForm) {
  // F = 1 N at the tip, L = 0.3 m, EI = 0.5 N m^2: F L^3 / (3 EI) = 0.018 m.
  EXPECT_NEAR(cantilever_deflection(0.3, 0.3, 1.0, 0.5), 0.018, 1e-15);
}

TEST(Beam, MatchesIntegratedBendingEquation) {
  // EI w'' = F (a - xi) for xi < a, 0 beyond; integrate twice from the clamp.
  const double a = 0.2, f = 3.0, ei = 0.7, len = 0.3;
  const int n = 300000;
  const double dx = len / n;
  double w = 0.0, slope = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x0 = i * dx, x1 = x0 + dx;
    auto curvature = [&](double x) { return x < a ? f * (a - x) / ei : 0.0; };
    const double s1 = slope + 0.5 * (curvature(x0) + curvature(x1)) * dx;
    w += 0.5 * (slope + s1) * dx;
    slope = s1;
    if (i % 50000 == 49999) {
      EXPECT_NEAR(w, cantilever_deflection(x1, a, f, ei), 1e-8);
      EXPECT_NEAR(slope, cantilever_slope(x1, a, f, ei), 1e-8);
    }
  }
}

TEST(Beam, SlopeIsDerivativeOfDeflection) {
  const double a = 0.1, f = 2.0, ei = 0.3, h = 1e-6;
  for (double xi : {0.01, 0.05, 0.0999, 0.12, 0.2}) {
    const double fd = (cantilever_deflection(xi + h, a, f, ei) - cantilever_deflection(xi - h, a, f, ei)) / (2 * h);
    EXPECT_NEAR(fd, cantilever_slope(xi, a, f, ei), 1e-7);
  }
  EXPECT_EQ(cantilever_deflection(-0.1, a, f, ei), 0.0);
}

// --- nominal geometry ------------------------------------------------------

TEST(BuildNominal, SpatulaIsClosedGenusZero) {
  const auto [mesh, cloud] = build_nominal(spatula(), 1e5, 3);
  EXPECT_TRUE(mesh.watertight_flag);
  EXPECT_EQ(euler_characteristic(mesh), 2);
  EXPECT_GT(signed_volume(mesh), 0.0);
  ASSERT_TRUE(cloud.has_normals());
  EXPECT_NO_THROW(validate(cloud));
}

TEST(BuildNominal, NormalsPointOutward) {
  const auto [mesh, cloud] = build_nominal(spatula(), 1e5, 3);
  for (std::size_t i = 0; i < cloud.size(); i += 7) {
    const double inside = winding_number(mesh, cloud.points[i] - 1e-4 * cloud.normals[i]);
    const double outside = winding_number(mesh, cloud.points[i] + 1e-4 * cloud.normals[i]);
    EXPECT_GT(inside, 0.5);
    EXPECT_LT(outside, 0.5);
  }
}

TEST(BuildNominal, DensityScalesPointCount) {
  const auto [m1, c1] = build_nominal(spatula(), 5e4, 1);
  const auto [m2, c2] = build_nominal(spatula(), 1e5, 1);
  const double expected = 2.0 * static_cast<double>(c1.size());
  EXPECT_NEAR(static_cast<double>(c2.size()), expected, 0.1 * expected);
  EXPECT_NEAR(static_cast<double>(c2.size()), surface_area(m2) * 1e5, 1.0);
}

TEST(BuildNominal, DegenerateSpecsRejected) {
  ToolSpec s = spatula();
  s.blade_thickness = 0.0;
  try {
    build_nominal(s, 1e5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidSpec);
  }
  s = spatula();
  s.youngs_modulus = -1.0;
  EXPECT_THROW(validate(s), Error);
  s = spatula();
  s.section_vertices = 10;
  EXPECT_THROW(validate(s), Error);
  s = spatula();
  s.fixture_length = 1.0;  // longer than the tool
  EXPECT_THROW(validate(s), Error);
}

// --- deformation -----------------------------------------------------------

BoundaryCondition tip_load(const ToolSpec& spec, const PointCloud& cloud, const Vec3& force) {
  BoundaryCondition bc;
  std::size_t best = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.points[i].x() > cloud.points[best].x()) best = i;
  bc.load_point = cloud.points[best];
  bc.load_vector = force;
  bc.contact_radius = 0.01;
  (void)spec;
  return bc;
}

TEST(Deform, ZeroLoadIsIdentity) {
  const ToolSpec s = spatula();
  const auto [mesh, cloud] = build_nominal(s, 5e4, 2);
  const DeformationSample d = deform(s, cloud, tip_load(s, cloud, Vec3::Zero()));
  EXPECT_EQ(d.deformed_cloud.points, cloud.points);
  EXPECT_EQ(d.deformed_cloud.normals, cloud.normals);
  EXPECT_EQ(d.contacts.reaction, Vec3::Zero());
}

TEST(Deform, EquilibriumAndContactSubset) {
  const ToolSpec s = spatula();
  const auto [mesh, cloud] = build_nominal(s, 5e4, 2);
  const Vec3 f(0.0, 0.1, -0.5);
  const DeformationSample d = deform(s, cloud, tip_load(s, cloud, f));
  EXPECT_LT((d.contacts.reaction + f).norm(), 1e-6);
  ASSERT_EQ(d.deformed_cloud.size(), cloud.size());
  ASSERT_FALSE(d.contacts.indices.empty());
  for (std::size_t k = 0; k < d.contacts.indices.size(); ++k)
    EXPECT_EQ(d.contacts.locations.points[k], cloud.points[static_cast<std::size_t>(d.contacts.indices[k])]);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(d.deformed_cloud.points[i].x(), cloud.points[i].x());
    EXPECT_NEAR(d.deformed_cloud.normals[i].norm(), 1.0, 1e-12);
    if (cloud.points[i].x() <= s.fixture_length) {
      EXPECT_EQ(d.deformed_cloud.points[i], cloud.points[i]);
    }
  }
}

TEST(Deform, MirroredLoadMirrorsCloud) {
  const ToolSpec s = spatula();
  const auto [mesh, cloud] = build_nominal(s, 5e4, 2);
  const BoundaryCondition bc = tip_load(s, cloud, Vec3(0.0, 0.0, 0.6));
  BoundaryCondition neg = bc;
  neg.load_vector = -bc.load_vector;
  const DeformationSample a = deform(s, cloud, bc), b = deform(s, cloud, neg);
  // Displacements flip sign: a - p = -(b - p).
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 da = a.deformed_cloud.points[i] - cloud.points[i];
    const Vec3 db = b.deformed_cloud.points[i] - cloud.points[i];
    EXPECT_LT((da + db).norm(), 1e-9);
  }
}

TEST(Deform, MatchesBeamDisplacement) {
  const ToolSpec s = spatula();
  const auto [mesh, cloud] = build_nominal(s, 5e4, 2);
  const BoundaryCondition bc = tip_load(s, cloud, Vec3(0.0, 0.0, 0.5));
  const DeformationSample d = deform(s, cloud, bc);
  const double tip = beam_displacement(s, bc, s.total_length()).z();
  EXPECT_NEAR(tip, 0.5 * std::pow(bc.load_point.x() - s.fixture_length, 2) *
                       (3 * s.cantilever_length() - (bc.load_point.x() - s.fixture_length)) /
                       (6 * s.rigidity_z()),
              1e-12);
  double max_dz = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    max_dz = std::max(max_dz, d.deformed_cloud.points[i].z() - cloud.points[i].z());
  EXPECT_LE(max_dz, tip + 1e-15);
  EXPECT_GT(max_dz, 0.9 * tip);
}

TEST(Deform, Errors) {
  const ToolSpec s = spatula();
  const auto [mesh, cloud] = build_nominal(s, 5e4, 2);
  BoundaryCondition bc = tip_load(s, cloud, Vec3(0, 0, 1e4));
  try {
    deform(s, cloud, bc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRegime);
  }
  bc = tip_load(s, cloud, Vec3(0, 0, 0.5));
  bc.load_point = Vec3(0.2, 1.0, 1.0);
  try {
    deform(s, cloud, bc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidInput);
  }
  bc = tip_load(s, cloud, Vec3(0.5, 0, 0.5));  // axial component
  EXPECT_THROW(deform(s, cloud, bc), Error);
}

// --- dataset ---------------------------------------------------------------

class DatasetTest : public ::testing::Test {
 protected:
  static io::fs::path dir(const std::string& name) {
    const auto d = io::fs::temp_directory_path() / ("defsdf_ds_" + name);
    io::fs::remove_all(d);
    return d;
  }
};

TEST_F(DatasetTest, RecordCountsAndRoundTrip) {
  const auto d = dir("counts");
  const io::Json manifest = generate_dataset({testing::tiny_tool("a"), testing::tiny_tool("b")}, 3, 11, d, testing::tiny_options());
  EXPECT_EQ(manifest.at("records").size(), 2u + 6u);
  const Dataset ds = load_dataset(d);
  ASSERT_EQ(ds.tools.size(), 2u);
  ASSERT_EQ(ds.deformations.size(), 6u);
  int test = 0;
  for (const auto& r : ds.deformations) {
    test += r.split == "test" ? 1 : 0;
    const auto& tool = ds.tools[static_cast<std::size_t>(r.tool_index)];
    EXPECT_EQ(r.deformed_cloud.size(), tool.nominal_cloud.size());
    EXPECT_NO_THROW(validate(r.sdf));
    EXPECT_FALSE(r.contacts.locations.empty());
    EXPECT_GT(r.max_deflection, 0.0);
  }
  EXPECT_EQ(test, 2);
  for (const auto& t : ds.tools) {
    EXPECT_LT(centroid(t.nominal_cloud.points).norm(), 1e-6);
    for (const auto& p : t.nominal_cloud.points) EXPECT_LE(p.norm(), 1.0 + 1e-6);
    EXPECT_TRUE(is_watertight(t.nominal_mesh));
    EXPECT_NEAR(t.nominal_cloud.frame_scale, 1.0 / t.transform.scale, 1e-6);
  }
}

TEST_F(DatasetTest, HeldOutConditionIsInteriorByDeflection) {
  const std::vector<double> defl = {0.5, 0.1, 0.9, 0.3, 0.7};
  const auto held = detail::holdout_conditions(defl, 1);
  ASSERT_EQ(held.size(), 1u);
  EXPECT_NE(defl[static_cast<std::size_t>(held[0])], 0.1);
  EXPECT_NE(defl[static_cast<std::size_t>(held[0])], 0.9);
}

TEST_F(DatasetTest, SameSeedIsByteIdentical) {
  const auto a = dir("det_a"), b = dir("det_b");
  generate_dataset({testing::tiny_tool("a")}, 2, 5, a, testing::tiny_options());
  generate_dataset({testing::tiny_tool("a")}, 2, 5, b, testing::tiny_options());
  std::size_t files = 0;
  for (const auto& e : io::fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = io::fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 5u);
}

TEST_F(DatasetTest, Errors) {
  EXPECT_THROW(generate_dataset({}, 2, 1, dir("none"), testing::tiny_options()), Error);
  EXPECT_THROW(generate_dataset({testing::tiny_tool("a")}, 0, 1, dir("zero"), testing::tiny_options()), Error);
  try {
    load_dataset(dir("missing"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidDataset);
  }
  // A file where the output directory should be.
  const auto blocker = dir("blocked");
  std::ofstream(blocker.string()) << "x";
  try {
    generate_dataset({testing::tiny_tool("a")}, 1, 1, blocker / "sub", testing::tiny_options());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
  io::fs::remove(blocker);
}

}  // namespace
}  // namespace defsdf
