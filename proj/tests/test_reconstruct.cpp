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

namespace defsdf {
namespace {

template <class F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::kInvalidInput;
}

TEST(ModelGrid, NodesMatchPointwiseEvaluation) {
  const FieldModel m = testing::small_model(4);
  const ObjectCode alpha = m.object_code(1);
  const ForceCode z = m.force_code(0);
  for (const std::optional<ForceCode>& code : {std::optional<ForceCode>{}, std::optional<ForceCode>(z)}) {
    const FieldGrid g = sample_model_grid(m, alpha, code, 12, 3);
    const FieldEvaluator f(m, alpha, code);
    for (int k = 0; k < 12; ++k)
      for (int j = 0; j < 12; ++j)
        for (int i = 0; i < 12; ++i) EXPECT_EQ(g.values[g.index(i, j, k)], f.sdf(g.node(i, j, k)));
  }
  EXPECT_THROW(marching_cubes(m, alpha, std::nullopt, 1), Error);
}

TEST(CrossSection, ZeroFieldGridsAgree) {
  FieldModel m = testing::small_model(5);
  const int last = m.config.hidden_layers;
  m.params.at("psi_d.L" + std::to_string(last) + ".w2").setZero();
  m.params.at("psi_d.L" + std::to_string(last) + ".b2").setZero();
  Plane plane;
  plane.axis = 1;
  plane.offset = 0.2;
  const CrossSection cs = export_cross_section(m, m.object_code(0), m.force_code(1), plane, 16);
  ASSERT_EQ(cs.deformed.node_count(), 256u);
  EXPECT_EQ(cs.deformed.counts[1], 1);
  EXPECT_EQ(cs.deformed.values, cs.nominal.values);
  for (double v : cs.deformation.values) EXPECT_EQ(v, 0.0);
  for (int a = 0; a < 16; ++a) EXPECT_EQ(cs.nominal.node(a, 0, 3).y(), 0.2);
}

TEST(CrossSection, DeformationNormsMatchVectors) {
  const FieldModel m = testing::small_model(6);
  const CrossSection cs = export_cross_section(m, m.object_code(0), m.force_code(0), Plane{2, -0.5}, 10);
  for (std::size_t i = 0; i < cs.deformation.values.size(); ++i)
    EXPECT_EQ(cs.deformation.values[i], cs.deformation.vectors[i].norm());
}

TEST(CrossSection, Errors) {
  const FieldModel m = testing::small_model(6);
  EXPECT_EQ(error_kind([&] { export_cross_section(m, m.object_code(0), m.force_code(0), Plane{1, 1.5}, 8); }),
            ErrorKind::kInvalidInput);
  EXPECT_EQ(error_kind([&] { export_cross_section(m, m.object_code(0), m.force_code(0), Plane{3, 0}, 8); }),
            ErrorKind::kInvalidInput);
  EXPECT_EQ(error_kind([&] { export_cross_section(m, m.object_code(0), m.force_code(0), Plane{0, 0}, 1); }),
            ErrorKind::kInvalidInput);
}

TEST(SaveGrid, WritesArraysAndCsv) {
  const auto dir = io::fs::temp_directory_path() / "defsdf_test_grid";
  io::fs::remove_all(dir);
  const FieldModel m = testing::small_model(6);
  const CrossSection cs = export_cross_section(m, m.object_code(0), m.force_code(0), Plane{1, 0}, 5);
  save_grid(dir, "deformation", cs.deformation, true);
  const io::Json meta = io::read_json(dir / io::kManifestName);
  EXPECT_TRUE(meta.dump().find("deformation") != std::string::npos);
  EXPECT_EQ(io::fs::file_size(dir / "deformation_values.bin"), 25u * sizeof(float));
  EXPECT_EQ(io::fs::file_size(dir / "deformation_vectors.bin"), 75u * sizeof(float));
  std::ifstream csv(dir / "deformation.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 26u);
}

TEST(Correspondences, IdentityForEqualCodes) {
  const FieldModel m = testing::small_model(7);
  Rng rng(3);
  const auto pts = testing::random_points(40, rng, 0.7);
  const auto r = correspondences(m, m.object_code(0), m.force_code(1), m.force_code(1), pts);
  EXPECT_EQ(r.failures(), 0u);
  for (const auto& d : r.displacement) EXPECT_EQ(d.norm(), 0.0);
}

TEST(Correspondences, SolvesTheSharedFrameEquation) {
  const FieldModel m = testing::small_model(8);
  const ForceCode za = m.force_code(0), zb = m.force_code(1);
  const FieldEvaluator fa(m, m.object_code(0), za), fb(m, m.object_code(0), zb);
  Rng rng(9);
  const auto pts = testing::random_points(30, rng, 0.6);
  const auto r = correspondences(m, m.object_code(0), za, zb, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!r.converged[i]) continue;
    const Vec3 lhs = r.target[i] + fb.deformation(r.target[i]);
    const Vec3 rhs = pts[i] + fa.deformation(pts[i]);
    EXPECT_LT((lhs - rhs).norm(), 1e-5);
    EXPECT_EQ(r.displacement[i], r.target[i] - r.source[i]);
  }
  EXPECT_LT(r.failures(), pts.size() / 10 + 1);
}

}  // namespace
}  // namespace defsdf
