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
using testing::tiny_train_config;
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

std::vector<io::Json> phase(const TrainState& st, const std::string& name) {
  std::vector<io::Json> out;
  for (const auto& e : st.history)
    if (e.at("phase") == name) out.push_back(e);
  return out;
}

double mean_deformation(const FieldModel& m, const Dataset& ds) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& d : ds.deformations) {
    const int k = m.force_index(d.tool_id, d.condition);
    if (k < 0) continue;
    for (const auto& v : deformation_field(m, m.force_code(k), m.object_code(d.tool_index),
                                           d.deformed_cloud.points)) {
      sum += v.norm();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = tiny_train_config();
  c.weights.lambda_c = 0.25;
  c.freeze_object = false;
  const TrainConfig r = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  c.deform_epochs = -1;
  EXPECT_EQ(error_kind([&] { validate(c); }), ErrorKind::kConfig);
  c = tiny_train_config();
  c.lr_floor = 2.0;
  EXPECT_EQ(error_kind([&] { validate(c); }), ErrorKind::kConfig);
}

TEST(Pretrain, LowersTheNominalLoss) {
  const auto log = phase(tiny_trained(), "pretrain");
  ASSERT_EQ(log.size(), static_cast<std::size_t>(tiny_train_config().pretrain_epochs));
  EXPECT_LT(log.back().at("loss").get<double>(), log.front().at("loss").get<double>());
  for (const auto& e : log) {
    EXPECT_GE(e.at("loss").get<double>(), 0.0);
    EXPECT_GE(e.at("sdf").get<double>(), 0.0);
  }
}

TEST(Pretrain, SameSeedSameTrajectory) {
  TrainConfig c = tiny_train_config();
  c.pretrain_epochs = 4;
  const TrainState a = pretrain_nominal(tiny_dataset(), c), b = pretrain_nominal(tiny_dataset(), c);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model.params.values, b.model.params.values);
  c.seed = 4;
  EXPECT_NE(pretrain_nominal(tiny_dataset(), c).history, a.history);
}

TEST(Pretrain, EmptyDatasetIsRejected) {
  EXPECT_EQ(error_kind([] { pretrain_nominal(Dataset{}, tiny_train_config()); }),
            ErrorKind::kInvalidDataset);
}

TEST(TrainDeformed, ObjectModuleStaysFrozen) {
  TrainConfig c = tiny_train_config();
  c.pretrain_epochs = 3;
  c.deform_epochs = 2;
  const TrainState pre = pretrain_nominal(tiny_dataset(), c);
  const TrainState post = train_deformed(pre, tiny_dataset(), c);
  std::size_t frozen = 0, moved = 0;
  for (std::size_t i = 0; i < pre.model.params.names.size(); ++i) {
    const std::string& g = pre.model.params.groups[i];
    const bool same = (pre.model.params.values[i].array() == post.model.params.values[i].array()).all();
    if (g == "psi_o" || g == "object_codes") {
      EXPECT_TRUE(same) << pre.model.params.names[i];
      ++frozen;
    } else if (g == "psi_d") {
      moved += same ? 0 : 1;
    }
  }
  EXPECT_GT(frozen, 0u);
  EXPECT_GT(moved, 0u);
  EXPECT_TRUE(post.model.deformation_trained);
}

TEST(TrainDeformed, SameSeedSameTrajectory) {
  TrainConfig c = tiny_train_config();
  c.pretrain_epochs = 2;
  c.deform_epochs = 2;
  const TrainState pre = pretrain_nominal(tiny_dataset(), c);
  const TrainState a = train_deformed(pre, tiny_dataset(), c), b = train_deformed(pre, tiny_dataset(), c);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model.params.values, b.model.params.values);
}

TEST(TrainDeformed, CachesEncoderCodesInTheTable) {
  const FieldModel& m = tiny_trained().model;
  std::size_t checked = 0;
  for (const auto& d : tiny_dataset().deformations) {
    const int k = m.force_index(d.tool_id, d.condition);
    if (d.split != "train") {
      EXPECT_LT(k, 0);
      continue;
    }
    ASSERT_GE(k, 0);
    EXPECT_EQ(m.force_code(k), encode_force(m, d.contacts).z);
    ++checked;
  }
  EXPECT_EQ(checked, 4u);
  for (const auto& e : phase(tiny_trained(), "deform")) {
    EXPECT_GE(e.at("correction").get<double>(), 0.0);
    EXPECT_GE(e.at("mean_deformation").get<double>(), 0.0);
  }
}

TEST(TrainDeformed, PreconditionErrors) {
  TrainState fresh;
  fresh.model = testing::small_model();
  EXPECT_EQ(error_kind([&] { train_deformed(fresh, tiny_dataset(), tiny_train_config()); }),
            ErrorKind::kInvalidState);

  TrainConfig c = tiny_train_config();
  c.pretrain_epochs = 1;
  c.deform_epochs = 1;
  const TrainState pre = pretrain_nominal(tiny_dataset(), c);
  Dataset broken = tiny_dataset();
  for (auto& d : broken.deformations)
    if (d.split == "train") d.deformed_cloud.points.pop_back();
  EXPECT_EQ(error_kind([&] { train_deformed(pre, broken, c); }), ErrorKind::kInvalidDataset);

  TrainState poisoned = pre;
  poisoned.model.params.at("psi_d.L0.b2")(0, 0) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(error_kind([&] { train_deformed(poisoned, tiny_dataset(), c); }), ErrorKind::kNumerical);
}

TEST(TrainDeformed, CorrectionWeightShrinksTheField) {
  TrainConfig c = tiny_train_config();
  const TrainState pre = pretrain_nominal(tiny_dataset(), c);
  c.weights.lambda_c = 0.0;
  const double free = mean_deformation(train_deformed(pre, tiny_dataset(), c).model, tiny_dataset());
  c.weights.lambda_c = 10.0;
  const double tight = mean_deformation(train_deformed(pre, tiny_dataset(), c).model, tiny_dataset());
  EXPECT_LE(tight, free);
}

}  // namespace
}  // namespace defsdf
