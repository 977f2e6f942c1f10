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

// Recovering a deformation from a partial surface observation by optimizing
// the pooled contact feature with every network weight frozen, plus force-code
// interpolation.

#include "defsdf/fieldnet.hpp"
#include "defsdf/losses.hpp"
#include "defsdf/optim.hpp"
#include "defsdf/reconstruct.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace defsdf {

struct PartialObservation {
  PointCloud visible_points;      // normalized, on-surface
  std::optional<Vec3> known_u;    // reaction force in Newtons
  ObjectCode alpha;
  std::optional<Vec3> camera;     // viewpoint, only needed for ray augmentation
};

struct InferenceOptions {
  int iterations = 300;
  double lr = 1e-3;
  int restarts = 3;
  double init_std = 0.01;
  std::uint64_t seed = 0;
  int max_backtracks = 12;       // step halvings before an iteration counts as stalled
  double ray_offset = 0.0;       // > 0 adds free-space points this far towards the camera
  int recon_resolution = 0;      // 0 skips the final reconstruction
  std::size_t recon_points = 5600;
  unsigned threads = 1;
};

struct InferenceResult {
  Eigen::VectorXf contact_feature;
  Vec3 u = Vec3::Zero();
  ForceCode z;
  ForceCode initial_z;                 // code at iteration 0 of the kept restart
  std::vector<double> loss_trajectory;
  int restart = 0;
  bool diverged = false;
  std::optional<TriangleMesh> reconstructed_mesh;
  PointCloud reconstructed_cloud;
};

namespace detail {

struct InferenceGraphValue {
  double loss = 0.0;
  RowMatrix<float> grad_feature, grad_u;
};

/// L_infer (plus optional free-space term) and its gradient with respect to
/// the contact feature and, when `optimize_u`, the scaled force slot.
inline InferenceGraphValue infer_objective(const FieldModel& model, const ObjectCode& alpha,
                                           const RowMatrix<float>& feature,
                                           const RowMatrix<float>& u_scaled, bool optimize_u,
                                           std::span<const Vec3> points,
                                           std::span<const Vec3> free_points, double free_offset,
                                           double delta) {
  ad::Tape<float> tape;
  Binding<float> bind(model.params, tape, {});
  const float omega = static_cast<float>(model.config.omega);
  auto f = tape.leaf(feature, true);
  auto u = tape.leaf(u_scaled, optimize_u);
  auto z = fuse_force(bind, f, u);
  auto a = tape.constant(alpha.transpose());
  auto net_o = hyper_decode(bind, "psi_o", a, target_layers(model.config, 1));
  auto net_d = hyper_decode(bind, "psi_d", ad::concat_cols(z, a), target_layers(model.config, 3));
  auto loss = infer_loss_graph<float>(net_o, &net_d, points, delta, omega);
  if (!free_points.empty()) {
    const float d = static_cast<float>(delta);
    auto x = points_var(tape, free_points);
    auto s = composed_forward<float>(net_o, &net_d, x, omega, false).sdf;
    auto target = static_cast<float>(std::min(free_offset, delta));
    loss = ad::add(loss, ad::sum(ad::abs(ad::add_scalar(ad::clamp(s, -d, d), -target))));
  }
  tape.backward(loss);
  InferenceGraphValue out;
  out.loss = loss.scalar();
  out.grad_feature = ad::gradient_of(f);
  out.grad_u = optimize_u ? ad::gradient_of(u) : RowMatrix<float>::Zero(1, 3);
  return out;
}

inline std::vector<Vec3> free_space_points(const PartialObservation& obs, double offset) {
  std::vector<Vec3> out;
  if (offset <= 0.0 || !obs.camera) return out;
  for (const auto& p : obs.visible_points.points) {
    const Vec3 d = *obs.camera - p;
    if (d.norm() > 0) out.push_back(p + offset * d.normalized());
  }
  return out;
}

}  // namespace detail

/// Optimizes the contact feature so the composed field vanishes on the
/// visible points. Each iteration takes an Adam step and halves it until the
/// loss decreases, falling back to a steepest-descent step when the Adam
/// direction fails; restarts keep the lowest final loss.
inline InferenceResult infer_deformation(const FieldModel& model, const PartialObservation& obs,
                                         const InferenceOptions& opt = {},
                                         double delta = LossWeights{}.delta) {
  require(model.deformation_trained, ErrorKind::kInvalidState,
          "inference needs a model with a trained deformation network");
  require(!obs.visible_points.empty(), ErrorKind::kInvalidInput, "partial observation is empty");
  require(obs.alpha.size() == model.config.object_code_dim, ErrorKind::kShape,
          "object code dimension mismatch");
  bool known_alpha = false;
  for (int i = 0; i < model.n_objects(); ++i) known_alpha |= model.object_code(i) == obs.alpha;
  require(known_alpha, ErrorKind::kInvalidInput, "object code is not in the trained table");
  require(opt.iterations >= 0 && opt.restarts >= 1 && opt.lr > 0, ErrorKind::kConfig,
          "inference needs iterations >= 0, restarts >= 1 and lr > 0");

  const int fdim = model.config.contact_feature_dim;
  const bool optimize_u = !obs.known_u.has_value();
  const auto free_pts = detail::free_space_points(obs, opt.ray_offset);
  const std::span<const Vec3> pts(obs.visible_points.points);

  auto code_of = [&](const RowMatrix<float>& feature, const RowMatrix<float>& u_scaled) {
    const Vec3 u = u_scaled.row(0).transpose().cast<double>() / model.config.force_scale;
    return fuse_feature(model, feature.row(0).transpose(), u);
  };

  std::optional<InferenceResult> best;
  for (int r = 0; r < opt.restarts; ++r) {
    Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(r)));
    std::normal_distribution<double> gauss(0.0, opt.init_std);
    RowMatrix<float> feature(1, fdim);
    for (Index i = 0; i < fdim; ++i) feature(0, i) = static_cast<float>(gauss(rng));
    RowMatrix<float> u_scaled(1, 3);
    for (int d = 0; d < 3; ++d)
      u_scaled(0, d) = obs.known_u
                           ? static_cast<float>((*obs.known_u)[d] * model.config.force_scale)
                           : static_cast<float>(gauss(rng));

    InferenceResult res;
    res.restart = r;
    res.initial_z = code_of(feature, u_scaled);
    auto cur = detail::infer_objective(model, obs.alpha, feature, u_scaled, optimize_u, pts,
                                       free_pts, opt.ray_offset, delta);
    if (!std::isfinite(cur.loss)) {
      res.diverged = true;
    } else {
      res.loss_trajectory.push_back(cur.loss);
    }
    Adam adam;
    for (int it = 0; it < opt.iterations && !res.diverged; ++it) {
      RowMatrix<float> f_step = feature, u_step = u_scaled;
      adam.step("feature", f_step, cur.grad_feature, opt.lr);
      if (optimize_u) adam.step("u", u_step, cur.grad_u, opt.lr);
      const RowMatrix<float> df = f_step - feature, du = u_step - u_scaled;
      // Backtracking along a direction; true once the loss went down.
      auto search = [&](const RowMatrix<float>& dir_f, const RowMatrix<float>& dir_u, int halvings) {
        double t = 1.0;
        for (int b = 0; b <= halvings; ++b, t *= 0.5) {
          const RowMatrix<float> fc = feature + static_cast<float>(t) * dir_f;
          const RowMatrix<float> uc = u_scaled + static_cast<float>(t) * dir_u;
          auto cand = detail::infer_objective(model, obs.alpha, fc, uc, optimize_u, pts, free_pts,
                                              opt.ray_offset, delta);
          if (!std::isfinite(cand.loss)) {
            res.diverged = true;
            return false;
          }
          if (cand.loss < cur.loss) {
            feature = fc;
            u_scaled = uc;
            cur = std::move(cand);
            return true;
          }
        }
        return false;
      };
      bool accepted = search(df, du, opt.max_backtracks);
      if (!accepted && !res.diverged) {
        // The Adam direction need not descend; fall back to steepest descent.
        const double g = std::sqrt(cur.grad_feature.squaredNorm() + cur.grad_u.squaredNorm());
        if (g > 0) {
          const float s = static_cast<float>(opt.lr / g);
          const RowMatrix<float> gf = -s * cur.grad_feature, gu = -s * cur.grad_u;
          accepted = search(gf, gu, 3 * opt.max_backtracks);
        }
      }
      if (res.diverged) break;
      res.loss_trajectory.push_back(cur.loss);
      if (!accepted) break;  // stalled: no step size lowers the loss
    }
    res.contact_feature = feature.row(0).transpose();
    res.u = obs.known_u ? *obs.known_u
                        : Vec3(u_scaled.row(0).transpose().cast<double>() / model.config.force_scale);
    res.z = code_of(feature, u_scaled);
    const double final_loss =
        res.loss_trajectory.empty() ? std::numeric_limits<double>::infinity() : res.loss_trajectory.back();
    const double best_loss = best && !best->loss_trajectory.empty()
                                 ? best->loss_trajectory.back()
                                 : std::numeric_limits<double>::infinity();
    if (!best || final_loss < best_loss) best = std::move(res);
  }
  InferenceResult out = std::move(*best);
  if (opt.recon_resolution > 0) {
    out.reconstructed_mesh = marching_cubes(model, obs.alpha, out.z, opt.recon_resolution, opt.threads);
    out.reconstructed_cloud = sample_surface(*out.reconstructed_mesh, opt.recon_points,
                                             derive_seed(opt.seed, 99));
    out.reconstructed_cloud.frame_scale = obs.visible_points.frame_scale;
  }
  return out;
}

/// z(t) = (1 - t) z_l + t z_r; t outside [0, 1] extrapolates.
inline std::vector<ForceCode> interpolate_codes(const ForceCode& z_l, const ForceCode& z_r,
                                                std::span<const double> ts) {
  require(z_l.size() == z_r.size(), ErrorKind::kShape, "force codes differ in dimension");
  std::vector<ForceCode> out;
  out.reserve(ts.size());
  for (double t : ts) {
    if (t == 0.0) {
      out.push_back(z_l);
    } else if (t == 1.0) {
      out.push_back(z_r);
    } else {
      out.push_back(((1.0 - t) * z_l.cast<double>() + t * z_r.cast<double>()).cast<float>());
    }
  }
  return out;
}

/// Zero level set of O(x + D(x | z, alpha)).
inline TriangleMesh reconstruct_from_code(const FieldModel& model, const ObjectCode& alpha,
                                          const ForceCode& z, int resolution, unsigned threads = 1) {
  return marching_cubes(model, alpha, std::optional<ForceCode>(z), resolution, threads);
}

struct PinholeView {
  Vec3 camera = Vec3(0.0, 0.0, 3.0);
  Vec3 target = Vec3::Zero();
  Vec3 up = Vec3(0.0, 1.0, 0.0);
  double fov_degrees = 60.0;
  int image_size = 96;
  double depth_tolerance = 0.03;  // normalized units behind the nearest point in a pixel
};

struct OcclusionBand {
  int axis = 0;                  // tool axis
  double handle_fraction = 0.3;  // removed from the low end of the axis extent
  double tip_fraction = 0.1;     // removed from the high end
};

/// Points of `cloud` seen from a single pinhole camera (z-buffer over pixel
/// bins), with handle and tip bands along the tool axis removed.
inline PointCloud synthetic_partial_view(const PointCloud& cloud, const PinholeView& view = {},
                                         const OcclusionBand& band = {}) {
  validate(cloud);
  require(view.image_size >= 1 && view.fov_degrees > 0 && view.fov_degrees < 180,
          ErrorKind::kInvalidInput, "invalid pinhole camera");
  const Vec3 forward = (view.target - view.camera).normalized();
  const Vec3 right = forward.cross(view.up).normalized();
  const Vec3 up = right.cross(forward);
  const double tan_half = std::tan(view.fov_degrees * std::numbers::pi / 360.0);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : cloud.points) {
    lo = std::min(lo, p[band.axis]);
    hi = std::max(hi, p[band.axis]);
  }
  const double cut_lo = lo + band.handle_fraction * (hi - lo);
  const double cut_hi = hi - band.tip_fraction * (hi - lo);

  const int res = view.image_size;
  std::vector<int> pixel(cloud.size(), -1);
  std::vector<double> depth(cloud.size(), 0.0);
  std::vector<double> zbuf(static_cast<std::size_t>(res) * res, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 d = cloud.points[i] - view.camera;
    const double z = d.dot(forward);
    if (z <= 0) continue;
    const double u = d.dot(right) / (z * tan_half), v = d.dot(up) / (z * tan_half);
    if (std::abs(u) >= 1 || std::abs(v) >= 1) continue;
    const int px = std::min(res - 1, static_cast<int>((u + 1) * 0.5 * res));
    const int py = std::min(res - 1, static_cast<int>((v + 1) * 0.5 * res));
    pixel[i] = py * res + px;
    depth[i] = z;
    auto& zb = zbuf[static_cast<std::size_t>(pixel[i])];
    zb = std::min(zb, z);
  }
  std::vector<Index> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (pixel[i] < 0) continue;
    const double a = cloud.points[i][band.axis];
    if (a < cut_lo || a > cut_hi) continue;
    if (depth[i] <= zbuf[static_cast<std::size_t>(pixel[i])] + view.depth_tolerance)
      keep.push_back(static_cast<Index>(i));
  }
  return select(cloud, keep);
}

}  // namespace defsdf
