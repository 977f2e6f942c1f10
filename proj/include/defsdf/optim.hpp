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

#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace defsdf {

/// Cosine decay from 1 to `floor` over `total` steps.
inline double cosine_factor(long step, long total, double floor = 0.0) {
  if (total <= 0) return 1.0;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// Adam over named float tensors.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update of `param` with gradient `grad` at learning rate lr.
  void step(const std::string& name, RowMatrix<float>& param, const RowMatrix<float>& grad,
            double lr) {
    require(param.rows() == grad.rows() && param.cols() == grad.cols(), ErrorKind::kShape,
            "gradient shape mismatch for " + name);
    State& s = state_[name];
    if (s.m.size() == 0) {
      s.m = RowMatrix<float>::Zero(param.rows(), param.cols());
      s.v = RowMatrix<float>::Zero(param.rows(), param.cols());
    }
    ++s.t;
    const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    s.m = b1 * s.m + (1.0f - b1) * grad;
    s.v = b2 * s.v + (1.0f - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    const auto alpha = static_cast<float>(lr * std::sqrt(c2) / c1);
    const auto eps = static_cast<float>(eps_ * std::sqrt(c2));
    param.array() -= alpha * s.m.array() / (s.v.array().sqrt() + eps);
  }

  void reset() { state_.clear(); }

 private:
  struct State {
    RowMatrix<float> m, v;
    long t = 0;
  };
  double beta1_, beta2_, eps_;
  std::map<std::string, State> state_;
};

}  // namespace defsdf
