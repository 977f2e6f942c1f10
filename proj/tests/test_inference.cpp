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

namespace defsdf {
namespace {

using testing::tiny_dataset;
using testing::tiny_trained;

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

const DeformationRecord& first_train_record() {
  for (const auto& d : tiny_dataset().deformations)
    if (d.split == "train") return d;
  throw std::logic_error("tiny dataset has no training record");
}

PartialObservation full_view(const FieldModel& m, const DeformationRecord& d) {
  PartialObservation obs;
  obs.visible_points = subsample(d.deformed_cloud, 300, 7);
  obs.known_u = d.contacts.reaction;
  obs.alpha = m.object_code(d.tool_index);
  return obs;
}

InferenceOptions quick(int iterations) {
  InferenceOptions o;
  o.iterations = iterations;
  o.restarts = 2;
  o.lr = 1e-2;
  o.seed = 5;
  return o;
}

TEST(Interpolate, EndpointsAndMidpoint) {
  ForceCode l = ForceCode::Constant(4, 2.0f), r = ForceCode::Constant(4, 4.0f);
  l(1) = 0.1f;
  r(1) = 0.7f;
  const std::vector<double> ts = {0.0, 0.5, 1.0, 2.0, -1.0};
  const auto z = interpolate_codes(l, r, ts);
  ASSERT_EQ(z.size(), ts.size());
  EXPECT_EQ(z[0], l);
  EXPECT_EQ(z[2], r);
  EXPECT_EQ(z[1](0), 3.0f);
  EXPECT_EQ(z[3](0), 6.0f);
  EXPECT_EQ(z[4](0), 0.0f);
  EXPECT_EQ(error_kind([&] { interpolate_codes(l, ForceCode::Zero(3), ts); }), ErrorKind::kShape);
}

TEST(Infer, ZeroIterationsReturnsTheInitialization) {
  const FieldModel& m = tiny_trained().model;
  const auto obs = full_view(m, first_train_record());
  const InferenceResult r = infer_deformation(m, obs, quick(0));
  EXPECT_EQ(r.z, r.initial_z);
  EXPECT_EQ(r.loss_trajectory.size(), 1u);
  EXPECT_EQ(r.u, obs.known_u.value());
  EXPECT_FALSE(r.reconstructed_mesh.has_value());
}

TEST(Infer, LossNeverIncreasesAndWeightsStayPut) {
  const FieldModel& m = tiny_trained().model;
  const auto obs = full_view(m, first_train_record());
  const auto before = m.params.values;
  const InferenceResult r = infer_deformation(m, obs, quick(30));
  EXPECT_EQ(m.params.values, before);
  ASSERT_GE(r.loss_trajectory.size(), 2u);
  for (std::size_t i = 1; i < r.loss_trajectory.size(); ++i)
    EXPECT_LT(r.loss_trajectory[i], r.loss_trajectory[i - 1]);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.u, obs.known_u.value());
}

TEST(Infer, DeterministicForSeed) {
  const FieldModel& m = tiny_trained().model;
  const auto obs = full_view(m, first_train_record());
  const InferenceResult a = infer_deformation(m, obs, quick(10)), b = infer_deformation(m, obs, quick(10));
  EXPECT_EQ(a.loss_trajectory, b.loss_trajectory);
  EXPECT_EQ(a.z, b.z);
}

TEST(Infer, UnknownForceIsOptimizedToo) {
  const FieldModel& m = tiny_trained().model;
  auto obs = full_view(m, first_train_record());
  obs.known_u.reset();
  const InferenceResult r = infer_deformation(m, obs, quick(10));
  EXPECT_LE(r.loss_trajectory.back(), r.loss_trajectory.front());
}

TEST(Infer, FreeSpacePointsFollowTheCameraRays) {
  PartialObservation obs;
  obs.visible_points.points = {Vec3(0, 0, 0), Vec3(0.5, 0, 0)};
  obs.camera = Vec3(0, 0, 2);
  const auto pts = detail::free_space_points(obs, 0.1);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_LT((pts[0] - Vec3(0, 0, 0.1)).norm(), 1e-15);
  obs.camera.reset();
  EXPECT_TRUE(detail::free_space_points(obs, 0.1).empty());
}

TEST(Infer, Errors) {
  const FieldModel& trained = tiny_trained().model;
  const auto obs = full_view(trained, first_train_record());
  const FieldModel fresh = testing::small_model();
  EXPECT_EQ(error_kind([&] { infer_deformation(fresh, obs, quick(1)); }), ErrorKind::kInvalidState);
  PartialObservation empty = obs;
  empty.visible_points = PointCloud{};
  EXPECT_EQ(error_kind([&] { infer_deformation(trained, empty, quick(1)); }), ErrorKind::kInvalidInput);
  PartialObservation wrong = obs;
  wrong.alpha = ObjectCode::Zero(obs.alpha.size() + 1);
  EXPECT_EQ(error_kind([&] { infer_deformation(trained, wrong, quick(1)); }), ErrorKind::kShape);
  wrong.alpha = obs.alpha.array() + 1.0f;
  EXPECT_EQ(error_kind([&] { infer_deformation(trained, wrong, quick(1)); }), ErrorKind::kInvalidInput);
}

TEST(ReconstructFromCode, ProducesAMeshAndRejectsTinyGrids) {
  const FieldModel& m = tiny_trained().model;
  const ObjectCode alpha = m.object_code(0);
  const TriangleMesh mesh = reconstruct_from_code(m, alpha, m.force_code(0), 24);
  EXPECT_FALSE(mesh.empty());
  EXPECT_THROW(reconstruct_from_code(m, alpha, m.force_code(0), 1), Error);
}

TEST(PartialView, KeepsOnlyTheVisibleMiddleBand) {
  const PointCloud c = testing::sphere_cloud(3000, 0.8);
  OcclusionBand band;
  band.handle_fraction = 0.25;
  band.tip_fraction = 0.25;
  PinholeView view;
  view.image_size = 24;  // several front points per pixel
  const PointCloud v = synthetic_partial_view(c, view, band);
  ASSERT_FALSE(v.empty());
  EXPECT_LT(v.size(), c.size() / 2);
  for (const auto& p : v.points) {
    EXPECT_GT(p.z(), -0.2);  // camera on +z sees the near hemisphere
    EXPECT_GE(p.x(), -0.4 - 1e-9);
    EXPECT_LE(p.x(), 0.4 + 1e-9);
  }
}

}  // namespace
}  // namespace defsdf
