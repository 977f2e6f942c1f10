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

#include "defsdf/fieldnet.hpp"
#include "defsdf/kdtree.hpp"
#include "defsdf/sdf_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace defsdf {

struct LossWeights {
  double lambda_normal = 0.1;  // normal alignment
  double lambda1 = 1.0;        // composed SDF term
  double lambda2 = 1e-4;       // object-code prior
  double lambda3 = 1e-4;       // hypernetwork output prior
  double lambda4 = 1e-4;       // force-code prior
  double lambda_c = 1e-2;      // minimal correction
  double delta = 0.1;          // clamp threshold
};

inline void validate(const LossWeights& w) {
  const bool ok = w.lambda_normal >= 0 && w.lambda1 >= 0 && w.lambda2 >= 0 && w.lambda3 >= 0 &&
                  w.lambda4 >= 0 && w.lambda_c >= 0;
  require(ok, ErrorKind::kConfig, "loss weights must be non-negative");
  require(w.delta > 0, ErrorKind::kConfig, "clamp threshold delta must be positive");
}

inline io::Json to_json(const LossWeights& w) {
  return {{"lambda_normal", w.lambda_normal}, {"lambda1", w.lambda1}, {"lambda2", w.lambda2},
          {"lambda3", w.lambda3},             {"lambda4", w.lambda4}, {"lambda_c", w.lambda_c},
          {"delta", w.delta}};
}

inline LossWeights loss_weights_from_json(const io::Json& j) {
  LossWeights w;
  w.lambda_normal = j.value("lambda_normal", w.lambda_normal);
  w.lambda1 = j.value("lambda1", w.lambda1);
  w.lambda2 = j.value("lambda2", w.lambda2);
  w.lambda3 = j.value("lambda3", w.lambda3);
  w.lambda4 = j.value("lambda4", w.lambda4);
  w.lambda_c = j.value("lambda_c", w.lambda_c);
  w.delta = j.value("delta", w.delta);
  return w;
}

inline double clamp_sdf(double s, double delta) {
  require(delta > 0, ErrorKind::kInvalidInput, "clamp threshold must be positive");
  return std::min(delta, std::max(-delta, s));
}

// ---------------------------------------------------------------------------
// Chamfer distance

/// Symmetric mean of squared nearest-neighbour distances.
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
  require(!a.empty() && !b.empty(), ErrorKind::kInvalidInput, "chamfer distance of an empty cloud");
  const KdTree ta(a), tb(b);
  double sa = 0.0, sb = 0.0;
  for (const auto& p : a) sa += tb.nearest(p).squared_distance;
  for (const auto& p : b) sb += ta.nearest(p).squared_distance;
  return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

inline double chamfer(const PointCloud& a, const PointCloud& b) { return chamfer(a.points, b.points); }

namespace ad {

/// Chamfer distance between a variable cloud a [n x 3] and a fixed cloud b.
/// Nearest-neighbour assignments are fixed at the forward pass.
template <class T>
Var<T> chamfer(Var<T> a, std::span<const Vec3> b) {
  require(a.rows() >= 1 && a.cols() == 3 && !b.empty(), ErrorKind::kInvalidInput,
          "chamfer distance of an empty cloud");
  const Matrix<T>& av = a.value();
  const Index n = av.rows();
  std::vector<Vec3> ap(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    ap[static_cast<std::size_t>(i)] = Vec3(av(i, 0), av(i, 1), av(i, 2));
  const KdTree ta(ap), tb(b);
  std::vector<Index> a_to_b(static_cast<std::size_t>(n)), b_to_a(b.size());
  double sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < ap.size(); ++i) {
    const Neighbor nb = tb.nearest(ap[i]);
    a_to_b[i] = nb.index;
    sa += nb.squared_distance;
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    const Neighbor nb = ta.nearest(b[j]);
    b_to_a[j] = nb.index;
    sb += nb.squared_distance;
  }
  Matrix<T> out(1, 1);
  out(0, 0) = static_cast<T>(sa / static_cast<double>(n) + sb / static_cast<double>(b.size()));
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  const int self = static_cast<int>(tape->size());
  std::vector<Vec3> bv(b.begin(), b.end());
  return tape->push(std::move(out), true,
                    [ia, self, a_to_b = std::move(a_to_b), b_to_a = std::move(b_to_a),
                     bv = std::move(bv)](Tape<T>& t) {
                      const T g = t.grad(self)(0, 0);
                      const Matrix<T>& x = t.value(ia);
                      auto& acc = t.grad_acc(ia);
                      const T wa = T(2) * g / static_cast<T>(x.rows());
                      const T wb = T(2) * g / static_cast<T>(bv.size());
                      for (Index i = 0; i < x.rows(); ++i) {
                        const Vec3& q = bv[static_cast<std::size_t>(a_to_b[static_cast<std::size_t>(i)])];
                        for (int d = 0; d < 3; ++d) acc(i, d) += wa * (x(i, d) - static_cast<T>(q[d]));
                      }
                      for (std::size_t j = 0; j < bv.size(); ++j) {
                        const Index i = b_to_a[j];
                        for (int d = 0; d < 3; ++d)
                          acc(i, d) += wb * (x(i, d) - static_cast<T>(bv[j][d]));
                      }
                    });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Loss graphs

enum class Reduction { kSum, kMean };

template <class T>
ad::Var<T> reduce(ad::Var<T> v, Reduction r) {
  return r == Reduction::kSum ? ad::sum(v) : ad::mean(v);
}

/// Rows of a sample set split into surface and off-surface index lists.
struct SampleRows {
  std::vector<std::size_t> surface, off;
  std::size_t size() const { return surface.size() + off.size(); }
};

inline SampleRows all_rows(const SdfSampleSet& s) {
  SampleRows r;
  for (std::size_t i = 0; i < s.size(); ++i) (s.surface_mask[i] ? r.surface : r.off).push_back(i);
  return r;
}

/// Deterministic random batch of `count` rows (all rows when count >= size),
/// keeping the set's surface share.
inline SampleRows batch_rows(const SdfSampleSet& s, std::size_t count, Rng& rng) {
  if (count >= s.size()) return all_rows(s);
  SampleRows r;
  std::uniform_int_distribution<std::size_t> pick(0, s.size() - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = pick(rng);
    (s.surface_mask[i] ? r.surface : r.off).push_back(i);
  }
  return r;
}

namespace detail {

template <class T>
ad::Var<T> gather_points(ad::Tape<T>& tape, const std::vector<Vec3>& pts,
                         const std::vector<std::size_t>& rows) {
  RowMatrix<T> m(static_cast<Index>(rows.size()), 3);
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (int d = 0; d < 3; ++d) m(static_cast<Index>(k), d) = static_cast<T>(pts[rows[k]][d]);
  return tape.constant(std::move(m));
}

template <class T>
ad::Var<T> gather_clamped_targets(ad::Tape<T>& tape, const SdfSampleSet& s,
                                  const std::vector<std::size_t>& rows, double delta) {
  RowMatrix<T> m(static_cast<Index>(rows.size()), 1);
  for (std::size_t k = 0; k < rows.size(); ++k)
    m(static_cast<Index>(k), 0) = static_cast<T>(clamp_sdf(s.sdf_values[rows[k]], delta));
  return tape.constant(std::move(m));
}

}  // namespace detail

template <class T>
struct SdfLossTerms {
  ad::Var<T> total;    // clamp term + lambda_normal * normal term
  ad::Var<T> clamp;    // reduced clamped L1
  ad::Var<T> normal;   // reduced 1 - cos(grad, n*); invalid without surface rows
};

/// Clamped L1 over all rows plus the normal-alignment term over surface rows,
/// for O alone (deform == nullptr) or the composed O(x + D(x)).
/// The normal term uses the cosine between the spatial gradient and n*.
template <class T>
SdfLossTerms<T> sdf_loss_graph(const TargetNet<T>& object, const TargetNet<T>* deform,
                               const SdfSampleSet& s, const SampleRows& rows,
                               const LossWeights& w, T omega, Reduction reduction) {
  require(rows.size() > 0, ErrorKind::kInvalidInput, "sdf loss over an empty batch");
  ad::Tape<T>& tape = *object.flat.front().tape();
  const T delta = static_cast<T>(w.delta);
  std::vector<ad::Var<T>> residuals;
  SdfLossTerms<T> out;
  if (!rows.surface.empty()) {
    for (std::size_t i : rows.surface)
      require(std::abs(s.normals[i].norm() - 1.0) <= 1e-6, ErrorKind::kInvalidInput,
              "surface sample without a unit normal");
    auto x = detail::gather_points(tape, s.queries, rows.surface);
    auto f = composed_forward(object, deform, x, omega, true);
    residuals.push_back(ad::abs(ad::sub(ad::clamp(f.sdf, -delta, delta),
                                        detail::gather_clamped_targets(tape, s, rows.surface, w.delta))));
    auto n = detail::gather_points(tape, s.normals, rows.surface);
    auto cosine = ad::div(ad::row_dot(f.sdf_grad, n), ad::add_scalar(ad::row_norm(f.sdf_grad), T(1e-8)));
    out.normal = reduce(ad::add_scalar(ad::scale(cosine, T(-1)), T(1)), reduction);
  }
  if (!rows.off.empty()) {
    auto x = detail::gather_points(tape, s.queries, rows.off);
    auto f = composed_forward(object, deform, x, omega, false);
    residuals.push_back(ad::abs(ad::sub(ad::clamp(f.sdf, -delta, delta),
                                        detail::gather_clamped_targets(tape, s, rows.off, w.delta))));
  }
  auto all = residuals.size() == 1 ? residuals[0] : ad::concat_rows<T>(residuals);
  out.clamp = reduce(all, reduction);
  out.total = out.clamp;
  if (out.normal.valid())
    out.total = ad::add(out.total, ad::scale(out.normal, static_cast<T>(w.lambda_normal)));
  return out;
}

/// ||code|| / dim.
template <class T>
ad::Var<T> latent_prior(ad::Var<T> code) {
  return ad::scale(ad::norm(code), T(1) / static_cast<T>(code.cols()));
}

/// ||theta|| / len(theta) for a decoded target network.
template <class T>
ad::Var<T> hyper_prior(const TargetNet<T>& net) {
  Index len = 0;
  for (const auto& f : net.flat) len += f.cols();
  return ad::scale(parameter_norm(net), T(1) / static_cast<T>(len));
}

/// Minimal-correction objective: CD(P + D(P), P*) + lambda_c * mean ||D(P)||.
template <class T>
ad::Var<T> correction_graph(const TargetNet<T>& deform, std::span<const Vec3> deformed_points,
                            std::span<const Vec3> nominal_points, double lambda_c, T omega,
                            ad::Var<T>* mean_deformation = nullptr) {
  require(!deformed_points.empty() && !nominal_points.empty(), ErrorKind::kInvalidDataset,
          "minimal-correction term needs deformed and nominal surface points");
  ad::Tape<T>& tape = *deform.flat.front().tape();
  auto p = points_var(tape, deformed_points);
  auto d = siren_forward(deform, p, ad::Var<T>(), omega).value;
  auto cd = ad::chamfer(ad::add(p, d), nominal_points);
  auto mag = ad::mean(ad::row_norm(d));
  if (mean_deformation) *mean_deformation = mag;
  return ad::add(cd, ad::scale(mag, static_cast<T>(lambda_c)));
}

/// sum over observed surface points of |clamp(sdf, delta)|.
template <class T>
ad::Var<T> infer_loss_graph(const TargetNet<T>& object, const TargetNet<T>* deform,
                            std::span<const Vec3> points, double delta, T omega) {
  require(!points.empty(), ErrorKind::kInvalidInput, "inference needs observed points");
  ad::Tape<T>& tape = *object.flat.front().tape();
  auto x = points_var(tape, points);
  auto f = composed_forward(object, deform, x, omega, false);
  const T d = static_cast<T>(delta);
  return ad::sum(ad::abs(ad::clamp(f.sdf, -d, d)));
}

// ---------------------------------------------------------------------------
// Value-level wrappers

/// Clamped-L1 plus normal term of object i on a sample set (sum reduction).
inline double nominal_sdf_loss(const FieldModel& model, const ObjectCode& alpha,
                               const SdfSampleSet& samples, const LossWeights& w,
                               Reduction reduction = Reduction::kSum) {
  validate(w);
  require(alpha.size() == model.config.object_code_dim, ErrorKind::kShape,
          "object code dimension mismatch");
  ad::Tape<float> tape;
  Binding<float> bind(model.params, tape, {});
  auto code = tape.constant(alpha.transpose());
  auto net = hyper_decode(bind, "psi_o", code, target_layers(model.config, 1));
  return sdf_loss_graph<float>(net, nullptr, samples, all_rows(samples), w,
                               static_cast<float>(model.config.omega), reduction)
      .total.scalar();
}

struct Regularizers {
  double latent = 0.0;  // sum_i ||alpha_i|| / l
  double hyper = 0.0;   // sum_i ||theta_o^i|| / l_o
};

inline Regularizers regularizers(const FieldModel& model) {
  Regularizers r;
  const int l = model.config.object_code_dim;
  const auto layers = target_layers(model.config, 1);
  const double lo = static_cast<double>(target_parameter_count(model.config, 1));
  for (int i = 0; i < model.n_objects(); ++i) {
    const ObjectCode a = model.object_code(i);
    r.latent += a.cast<double>().norm() / l;
    const Siren net = decode_siren(model.params, "psi_o", a, layers,
                                   static_cast<float>(model.config.omega));
    double sq = 0.0;
    for (const auto& w : net.weights()) sq += w.cast<double>().squaredNorm();
    for (const auto& b : net.biases()) sq += b.cast<double>().squaredNorm();
    r.hyper += std::sqrt(sq) / lo;
  }
  return r;
}

}  // namespace defsdf
