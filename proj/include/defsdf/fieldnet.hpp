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

// Learnable fields. A shape network O and a deformation network D share one
// sinusoidal MLP architecture; their weights are emitted per layer by
// hypernetworks conditioned on the object code (O) or on the pair
// (force code, object code) (D). A point-set encoder maps contact locations
// and the reaction force to the force code.
//
// Two evaluation paths exist: tape-based templates used by the losses, and a
// tape-free float evaluator (FieldEvaluator) whose per-point results do not
// depend on batch composition.

#include "defsdf/autodiff.hpp"
#include "defsdf/geometry.hpp"
#include "defsdf/io.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace defsdf {

using ObjectCode = Eigen::VectorXf;
using ForceCode = Eigen::VectorXf;

struct FieldConfig {
  int object_code_dim = 8;   // l
  int force_code_dim = 32;   // m
  int hidden_width = 256;
  int hidden_layers = 5;     // sine layers in O and D
  int hyper_hidden = 256;
  double omega = 30.0;
  int encoder_point_hidden = 64;
  int contact_feature_dim = 128;
  int encoder_fusion_hidden = 64;
  double force_scale = 0.1;  // multiplies u (Newtons) before fusion
  double hyper_out_scale = 0.01;
  double deform_bias_scale = 0.01;
  double code_init_std = 0.1;
};

inline void validate(const FieldConfig& c) {
  const bool ok = c.object_code_dim >= 1 && c.force_code_dim >= 1 && c.hidden_width >= 1 &&
                  c.hidden_layers >= 1 && c.hyper_hidden >= 1 && c.encoder_point_hidden >= 1 &&
                  c.contact_feature_dim >= 1 && c.encoder_fusion_hidden >= 1;
  require(ok, ErrorKind::kConfig, "network sizes must be positive");
  require(c.omega > 0 && c.force_scale > 0 && c.hyper_out_scale >= 0 && c.code_init_std >= 0,
          ErrorKind::kConfig, "omega and force_scale must be positive");
}

inline io::Json to_json(const FieldConfig& c) {
  return {{"object_code_dim", c.object_code_dim},
          {"force_code_dim", c.force_code_dim},
          {"hidden_width", c.hidden_width},
          {"hidden_layers", c.hidden_layers},
          {"hyper_hidden", c.hyper_hidden},
          {"omega", c.omega},
          {"encoder_point_hidden", c.encoder_point_hidden},
          {"contact_feature_dim", c.contact_feature_dim},
          {"encoder_fusion_hidden", c.encoder_fusion_hidden},
          {"force_scale", c.force_scale},
          {"hyper_out_scale", c.hyper_out_scale},
          {"deform_bias_scale", c.deform_bias_scale},
          {"code_init_std", c.code_init_std}};
}

inline FieldConfig field_config_from_json(const io::Json& j) {
  FieldConfig c;
  c.object_code_dim = j.value("object_code_dim", c.object_code_dim);
  c.force_code_dim = j.value("force_code_dim", c.force_code_dim);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.hyper_hidden = j.value("hyper_hidden", c.hyper_hidden);
  c.omega = j.value("omega", c.omega);
  c.encoder_point_hidden = j.value("encoder_point_hidden", c.encoder_point_hidden);
  c.contact_feature_dim = j.value("contact_feature_dim", c.contact_feature_dim);
  c.encoder_fusion_hidden = j.value("encoder_fusion_hidden", c.encoder_fusion_hidden);
  c.force_scale = j.value("force_scale", c.force_scale);
  c.hyper_out_scale = j.value("hyper_out_scale", c.hyper_out_scale);
  c.deform_bias_scale = j.value("deform_bias_scale", c.deform_bias_scale);
  c.code_init_std = j.value("code_init_std", c.code_init_std);
  return c;
}

struct LayerShape {
  int in = 0, out = 0;
  Index size() const { return static_cast<Index>(in) * out + out; }
};

/// Target network layers: 3 -> w, (w -> w) x (hidden_layers - 1), w -> out_dim.
inline std::vector<LayerShape> target_layers(const FieldConfig& c, int out_dim) {
  std::vector<LayerShape> s;
  s.push_back({3, c.hidden_width});
  for (int i = 1; i < c.hidden_layers; ++i) s.push_back({c.hidden_width, c.hidden_width});
  s.push_back({c.hidden_width, out_dim});
  return s;
}

inline Index target_parameter_count(const FieldConfig& c, int out_dim) {
  Index n = 0;
  for (const auto& l : target_layers(c, out_dim)) n += l.size();
  return n;
}

// ---------------------------------------------------------------------------
// Tensor store

/// Named tensors in insertion order, each tagged with a parameter group.
template <class T>
struct TensorStore {
  std::vector<std::string> names;
  std::vector<std::string> groups;
  std::vector<RowMatrix<T>> values;
  std::map<std::string, std::size_t> index;

  void add(const std::string& name, const std::string& group, RowMatrix<T> value) {
    require(!index.count(name), ErrorKind::kShape, "duplicate tensor " + name);
    index[name] = names.size();
    names.push_back(name);
    groups.push_back(group);
    values.push_back(std::move(value));
  }

  bool has(const std::string& name) const { return index.count(name) != 0; }

  RowMatrix<T>& at(const std::string& name) {
    auto it = index.find(name);
    require(it != index.end(), ErrorKind::kShape, "unknown tensor " + name);
    return values[it->second];
  }
  const RowMatrix<T>& at(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), ErrorKind::kShape, "unknown tensor " + name);
    return values[it->second];
  }
  const std::string& group_of(const std::string& name) const {
    return groups[index.at(name)];
  }

  template <class U>
  TensorStore<U> cast() const {
    TensorStore<U> out;
    for (std::size_t i = 0; i < names.size(); ++i)
      out.add(names[i], groups[i], values[i].template cast<U>());
    return out;
  }
};

/// Provenance of each force-code table row.
struct ForceCodeKey {
  std::string tool_id;
  int condition = -1;  // -1 marks a zero-load anchor
};

struct FieldModel {
  FieldConfig config;
  TensorStore<float> params;
  std::vector<std::string> object_ids;
  std::vector<ForceCodeKey> force_keys;
  bool pretrained = false;
  bool deformation_trained = false;

  int n_objects() const { return static_cast<int>(object_ids.size()); }
  int n_deformations() const { return static_cast<int>(force_keys.size()); }

  ObjectCode object_code(int i) const {
    require(i >= 0 && i < n_objects(), ErrorKind::kShape, "object code index out of range");
    return params.at("object_codes").row(i).transpose();
  }
  ForceCode force_code(int k) const {
    require(k >= 0 && k < n_deformations(), ErrorKind::kShape, "force code index out of range");
    return params.at("force_codes").row(k).transpose();
  }
  int object_index(const std::string& id) const {
    for (int i = 0; i < n_objects(); ++i)
      if (object_ids[static_cast<std::size_t>(i)] == id) return i;
    return -1;
  }
  int force_index(const std::string& tool_id, int condition) const {
    for (int k = 0; k < n_deformations(); ++k) {
      const auto& key = force_keys[static_cast<std::size_t>(k)];
      if (key.tool_id == tool_id && key.condition == condition) return k;
    }
    return -1;
  }
};

namespace detail {

inline RowMatrix<float> uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  RowMatrix<float> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(u(rng));
  return m;
}

/// Flattened default initialization of one sinusoidal layer (W row-major, then b).
inline RowMatrix<float> siren_layer_init(const LayerShape& s, bool first, double omega, Rng& rng) {
  const double bound = first ? 1.0 / s.in : std::sqrt(6.0 / s.in) / omega;
  RowMatrix<float> flat(1, s.size());
  const RowMatrix<float> w = uniform_matrix(s.out, s.in, bound, rng);
  const RowMatrix<float> b = uniform_matrix(1, s.out, 1.0 / std::sqrt(static_cast<double>(s.in)), rng);
  std::copy_n(w.data(), w.size(), flat.data());
  std::copy_n(b.data(), b.size(), flat.data() + w.size());
  return flat;
}

inline void add_hypernet(TensorStore<float>& store, const std::string& prefix,
                         const FieldConfig& c, int code_dim, int out_dim, bool zero_init_output,
                         Rng& rng) {
  const auto layers = target_layers(c, out_dim);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string p = prefix + ".L" + std::to_string(k);
    const int hh = c.hyper_hidden;
    store.add(p + ".w1", prefix, uniform_matrix(hh, code_dim, std::sqrt(6.0 / code_dim), rng));
    store.add(p + ".b1", prefix, RowMatrix<float>::Zero(1, hh));
    store.add(p + ".w2", prefix,
              uniform_matrix(layers[k].size(), hh, std::sqrt(6.0 / hh) * c.hyper_out_scale, rng));
    RowMatrix<float> bias = siren_layer_init(layers[k], k == 0, c.omega, rng);
    if (zero_init_output && k + 1 == layers.size()) bias *= static_cast<float>(c.deform_bias_scale);
    store.add(p + ".b2", prefix, std::move(bias));
  }
}

inline void add_linear(TensorStore<float>& store, const std::string& name, int in, int out,
                       Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(name + ".w", "encoder", uniform_matrix(out, in, bound, rng));
  store.add(name + ".b", "encoder", uniform_matrix(1, out, bound, rng));
}

}  // namespace detail

/// Fresh model with N object codes ~ N(0, code_init_std^2) and M zero force codes.
inline FieldModel init_model(const FieldConfig& config, std::vector<std::string> object_ids,
                             std::vector<ForceCodeKey> force_keys, std::uint64_t seed) {
  validate(config);
  require(!object_ids.empty(), ErrorKind::kInvalidInput, "model needs at least one object");
  FieldModel m;
  m.config = config;
  m.object_ids = std::move(object_ids);
  m.force_keys = std::move(force_keys);
  Rng rng(derive_seed(seed, 11));
  detail::add_hypernet(m.params, "psi_o", config, config.object_code_dim, 1, false, rng);
  detail::add_hypernet(m.params, "psi_d", config, config.force_code_dim + config.object_code_dim,
                       3, true, rng);
  detail::add_linear(m.params, "enc.p1", 3, config.encoder_point_hidden, rng);
  detail::add_linear(m.params, "enc.p2", config.encoder_point_hidden, config.contact_feature_dim,
                     rng);
  detail::add_linear(m.params, "enc.f1", config.contact_feature_dim + 3,
                     config.encoder_fusion_hidden, rng);
  detail::add_linear(m.params, "enc.f2", config.encoder_fusion_hidden, config.force_code_dim, rng);

  Rng code_rng(derive_seed(seed, 12));
  std::normal_distribution<double> gauss(0.0, config.code_init_std);
  RowMatrix<float> codes(m.n_objects(), config.object_code_dim);
  for (Index i = 0; i < codes.size(); ++i) codes.data()[i] = static_cast<float>(gauss(code_rng));
  m.params.add("object_codes", "object_codes", std::move(codes));
  m.params.add("force_codes", "force_codes",
               RowMatrix<float>::Zero(std::max(1, m.n_deformations()), config.force_code_dim));
  return m;
}

// ---------------------------------------------------------------------------
// Tape-based graphs

/// Lazily binds tensors of a store as tape leaves. Tensors whose group is
/// listed as trainable become gradient-requiring variables.
template <class T>
class Binding {
 public:
  using value_type = T;

  Binding(const TensorStore<T>& store, ad::Tape<T>& tape, std::vector<std::string> trainable)
      : store_(store), tape_(tape), trainable_(std::move(trainable)) {}

  ad::Var<T> operator()(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const bool rg = std::find(trainable_.begin(), trainable_.end(), store_.group_of(name)) !=
                    trainable_.end();
    ad::Var<T> v = tape_.leaf(store_.at(name), rg);
    leaves_.emplace(name, v);
    return v;
  }

  ad::Tape<T>& tape() { return tape_; }
  const std::map<std::string, ad::Var<T>>& leaves() const { return leaves_; }

  /// Gradients of every bound trainable tensor after backward().
  std::map<std::string, RowMatrix<T>> gradients() const {
    std::map<std::string, RowMatrix<T>> g;
    for (const auto& [name, v] : leaves_)
      if (v.requires_grad()) g.emplace(name, ad::gradient_of(v));
    return g;
  }

 private:
  const TensorStore<T>& store_;
  ad::Tape<T>& tape_;
  std::vector<std::string> trainable_;
  std::map<std::string, ad::Var<T>> leaves_;
};

template <class T>
struct TargetNet {
  std::vector<ad::Var<T>> flat;  // per layer, [1 x size]
  std::vector<ad::Var<T>> w, b;
};

/// Decodes target-network weights from a code row vector.
template <class T>
TargetNet<T> hyper_decode(Binding<T>& bind, const std::string& prefix, ad::Var<T> code,
                          const std::vector<LayerShape>& layers) {
  TargetNet<T> net;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string p = prefix + ".L" + std::to_string(k);
    auto h = ad::relu(ad::add_rowvec(ad::matmul_nt(code, bind(p + ".w1")), bind(p + ".b1")));
    auto flat = ad::add_rowvec(ad::matmul_nt(h, bind(p + ".w2")), bind(p + ".b2"));
    const LayerShape& s = layers[k];
    net.flat.push_back(flat);
    net.w.push_back(ad::unflatten(flat, 0, s.out, s.in));
    net.b.push_back(ad::unflatten(flat, static_cast<Index>(s.in) * s.out, 1, s.out));
  }
  return net;
}

/// Euclidean norm of the concatenated decoded parameter vector.
template <class T>
ad::Var<T> parameter_norm(const TargetNet<T>& net) {
  std::vector<ad::Var<T>> norms;
  for (const auto& f : net.flat) norms.push_back(ad::norm(f));
  return ad::norm(ad::concat_rows<T>(norms));
}

template <class T>
struct FieldOutput {
  ad::Var<T> value;    // [n x out]
  ad::Var<T> tangent;  // [(3n) x out], one block per input direction; may be invalid
};

/// Unit input tangents for n points: block d holds e_d in every row.
template <class T>
ad::Var<T> unit_tangents(ad::Tape<T>& tape, Index n) {
  RowMatrix<T> e = RowMatrix<T>::Zero(3 * n, 3);
  for (Index d = 0; d < 3; ++d) e.block(d * n, d, n, 1).setOnes();
  return tape.constant(std::move(e));
}

/// Sinusoidal MLP; propagates forward-mode tangents when `dx` is valid.
template <class T>
FieldOutput<T> siren_forward(const TargetNet<T>& net, ad::Var<T> x, ad::Var<T> dx, T omega) {
  const bool tangents = dx.valid();
  const std::size_t last = net.w.size() - 1;
  ad::Var<T> h = x, dh = dx;
  for (std::size_t k = 0; k < last; ++k) {
    auto pre = ad::add_rowvec(ad::matmul_nt(h, net.w[k]), net.b[k]);
    if (tangents) dh = ad::sine_tangent(pre, ad::matmul_nt(dh, net.w[k]), omega);
    h = ad::sine(pre, omega);
  }
  FieldOutput<T> out;
  out.value = ad::add_rowvec(ad::matmul_nt(h, net.w[last]), net.b[last]);
  if (tangents) out.tangent = ad::matmul_nt(dh, net.w[last]);
  return out;
}

template <class T>
ad::Var<T> points_var(ad::Tape<T>& tape, std::span<const Vec3> points) {
  RowMatrix<T> m(static_cast<Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (int d = 0; d < 3; ++d) m(static_cast<Index>(i), d) = static_cast<T>(points[i][d]);
  return tape.constant(std::move(m));
}

/// Pooled contact feature [1 x feature_dim] of contact locations q [k x 3].
template <class T>
ad::Var<T> contact_feature(Binding<T>& bind, ad::Var<T> q) {
  require(q.rows() >= 1 && q.cols() == 3, ErrorKind::kInvalidInput,
          "contact feature needs at least one contact location");
  auto h = ad::relu(ad::affine_rows_exact(q, bind("enc.p1.w"), bind("enc.p1.b")));
  h = ad::relu(ad::affine_rows_exact(h, bind("enc.p2.w"), bind("enc.p2.b")));
  return ad::max_pool_rows(h);
}

/// Force code [1 x m] from a contact feature and a scaled reaction force [1 x 3].
template <class T>
ad::Var<T> fuse_force(Binding<T>& bind, ad::Var<T> feature, ad::Var<T> u_scaled) {
  auto in = ad::concat_cols(feature, u_scaled);
  auto h = ad::relu(ad::affine_rows_exact(in, bind("enc.f1.w"), bind("enc.f1.b")));
  return ad::affine_rows_exact(h, bind("enc.f2.w"), bind("enc.f2.b"));
}

template <class T>
ad::Var<T> scaled_force(ad::Tape<T>& tape, const Vec3& u, double force_scale) {
  RowMatrix<T> m(1, 3);
  for (int d = 0; d < 3; ++d) m(0, d) = static_cast<T>(u[d] * force_scale);
  return tape.constant(std::move(m));
}

/// Shape and deformation networks evaluated on one batch, with spatial
/// gradients of the composed field.
template <class T>
struct ComposedOutput {
  ad::Var<T> sdf;          // [n x 1]  O(x + D(x)), or O(x) without D
  ad::Var<T> sdf_grad;     // [n x 3]  d sdf / dx
  ad::Var<T> deformation;  // [n x 3]  D(x); invalid without D
};

/// Evaluates O (and D when `deform` is given) on x with spatial gradients.
template <class T>
ComposedOutput<T> composed_forward(const TargetNet<T>& object, const TargetNet<T>* deform,
                                   ad::Var<T> x, T omega, bool with_gradient = true) {
  auto& tape = *x.tape();
  const Index n = x.rows();
  ad::Var<T> dx;
  if (with_gradient) dx = unit_tangents(tape, n);
  ComposedOutput<T> out;
  ad::Var<T> y = x, dy = dx;
  if (deform) {
    FieldOutput<T> d = siren_forward(*deform, x, dx, omega);
    out.deformation = d.value;
    y = ad::add(x, d.value);
    if (with_gradient) dy = ad::add(dx, d.tangent);
  }
  FieldOutput<T> s = siren_forward(object, y, dy, omega);
  out.sdf = s.value;
  if (with_gradient) out.sdf_grad = ad::unstack_directions(s.tangent, n);
  return out;
}

// ---------------------------------------------------------------------------
// Tape-free evaluation

/// Concrete sinusoidal MLP with float weights; evaluates one point at a time.
class Siren {
 public:
  Siren() = default;
  Siren(std::vector<RowMatrix<float>> w, std::vector<Eigen::VectorXf> b, float omega)
      : w_(std::move(w)), b_(std::move(b)), omega_(omega) {}

  bool empty() const { return w_.empty(); }
  std::vector<RowMatrix<float>>& weights() { return w_; }
  std::vector<Eigen::VectorXf>& biases() { return b_; }
  const std::vector<RowMatrix<float>>& weights() const { return w_; }
  const std::vector<Eigen::VectorXf>& biases() const { return b_; }

  Eigen::VectorXf value(const Eigen::Vector3f& x) const {
    Eigen::VectorXf h = x;
    const std::size_t last = w_.size() - 1;
    for (std::size_t k = 0; k < last; ++k)
      h = ((w_[k] * h + b_[k]).array() * omega_).sin().matrix();
    return w_[last] * h + b_[last];
  }

  /// Value and Jacobian [out x 3].
  std::pair<Eigen::VectorXf, Eigen::MatrixXf> value_and_jacobian(const Eigen::Vector3f& x) const {
    Eigen::VectorXf h = x;
    Eigen::MatrixXf j = Eigen::MatrixXf::Identity(3, 3);
    const std::size_t last = w_.size() - 1;
    for (std::size_t k = 0; k < last; ++k) {
      const Eigen::ArrayXf pre = ((w_[k] * h + b_[k]).array() * omega_);
      const Eigen::MatrixXf wj = w_[k] * j;
      j = (wj.array().colwise() * (pre.cos() * omega_)).matrix();
      h = pre.sin().matrix();
    }
    return {w_[last] * h + b_[last], w_[last] * j};
  }

 private:
  std::vector<RowMatrix<float>> w_;
  std::vector<Eigen::VectorXf> b_;
  float omega_ = 30.0f;
};

inline Siren decode_siren(const TensorStore<float>& params, const std::string& prefix,
                          const Eigen::VectorXf& code, const std::vector<LayerShape>& layers,
                          float omega) {
  std::vector<RowMatrix<float>> ws;
  std::vector<Eigen::VectorXf> bs;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string p = prefix + ".L" + std::to_string(k);
    const RowMatrix<float>& w1 = params.at(p + ".w1");
    require(w1.cols() == code.size(), ErrorKind::kShape, "code dimension mismatch for " + prefix);
    const Eigen::VectorXf h =
        (w1 * code + params.at(p + ".b1").row(0).transpose()).cwiseMax(0.0f);
    const Eigen::VectorXf flat = params.at(p + ".w2") * h + params.at(p + ".b2").row(0).transpose();
    const LayerShape& s = layers[k];
    RowMatrix<float> w(s.out, s.in);
    std::copy_n(flat.data(), w.size(), w.data());
    ws.push_back(std::move(w));
    bs.push_back(flat.segment(static_cast<Index>(s.in) * s.out, s.out));
  }
  return Siren(std::move(ws), std::move(bs), omega);
}

/// Decoded fields for one (object code, optional force code) pair.
class FieldEvaluator {
 public:
  FieldEvaluator(const FieldModel& model, const ObjectCode& alpha,
                 const std::optional<ForceCode>& z = std::nullopt) {
    const FieldConfig& c = model.config;
    require(alpha.size() == c.object_code_dim, ErrorKind::kShape,
            "object code has dimension " + std::to_string(alpha.size()) + ", expected " +
                std::to_string(c.object_code_dim));
    require(alpha.allFinite(), ErrorKind::kInvalidInput, "non-finite object code");
    const auto omega = static_cast<float>(c.omega);
    object_ = decode_siren(model.params, "psi_o", alpha, target_layers(c, 1), omega);
    if (z) {
      require(z->size() == c.force_code_dim, ErrorKind::kShape,
              "force code has dimension " + std::to_string(z->size()) + ", expected " +
                  std::to_string(c.force_code_dim));
      require(z->allFinite(), ErrorKind::kInvalidInput, "non-finite force code");
      Eigen::VectorXf code(c.force_code_dim + c.object_code_dim);
      code << *z, alpha;
      deform_ = decode_siren(model.params, "psi_d", code, target_layers(c, 3), omega);
    }
  }

  bool has_deformation() const { return !deform_.empty(); }
  Siren& object_net() { return object_; }
  Siren& deformation_net() { return deform_; }

  double object_sdf(const Vec3& x) const { return object_.value(x.cast<float>())(0); }

  Vec3 deformation(const Vec3& x) const {
    if (deform_.empty()) return Vec3::Zero();
    return deform_.value(x.cast<float>()).cast<double>();
  }

  /// O(x + D(x)); O(x) when no force code was given.
  double sdf(const Vec3& x) const {
    const Eigen::Vector3f xf = x.cast<float>();
    if (deform_.empty()) return object_.value(xf)(0);
    const Eigen::Vector3f y = xf + deform_.value(xf);
    return object_.value(y)(0);
  }

  /// Spatial gradient of sdf(x).
  Vec3 sdf_gradient(const Vec3& x) const {
    const Eigen::Vector3f xf = x.cast<float>();
    if (deform_.empty()) return object_.value_and_jacobian(xf).second.row(0).transpose().cast<double>();
    auto [d, jd] = deform_.value_and_jacobian(xf);
    const Eigen::Vector3f y = xf + d;
    const Eigen::MatrixXf jo = object_.value_and_jacobian(y).second;
    const Eigen::MatrixXf total = jo * (Eigen::MatrixXf::Identity(3, 3) + jd);
    return total.row(0).transpose().cast<double>();
  }

  Vec3 object_sdf_gradient(const Vec3& x) const {
    return object_.value_and_jacobian(x.cast<float>()).second.row(0).transpose().cast<double>();
  }

  /// Jacobian of x + D(x).
  Eigen::Matrix3d warp_jacobian(const Vec3& x) const {
    Eigen::Matrix3d j = Eigen::Matrix3d::Identity();
    if (!deform_.empty()) j += deform_.value_and_jacobian(x.cast<float>()).second.cast<double>();
    return j;
  }

 private:
  Siren object_;
  Siren deform_;
};

// ---------------------------------------------------------------------------
// Batch API

inline std::vector<double> object_sdf(const FieldModel& model, const ObjectCode& alpha,
                                      std::span<const Vec3> x) {
  const FieldEvaluator f(model, alpha);
  std::vector<double> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(f.object_sdf(p));
  return out;
}

inline std::vector<Vec3> object_sdf_gradient(const FieldModel& model, const ObjectCode& alpha,
                                             std::span<const Vec3> x) {
  const FieldEvaluator f(model, alpha);
  std::vector<Vec3> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(f.object_sdf_gradient(p));
  return out;
}

inline std::vector<Vec3> deformation_field(const FieldModel& model, const ForceCode& z,
                                           const ObjectCode& alpha, std::span<const Vec3> x) {
  const FieldEvaluator f(model, alpha, z);
  std::vector<Vec3> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(f.deformation(p));
  return out;
}

inline std::vector<double> deformed_sdf(const FieldModel& model, const ForceCode& z,
                                        const ObjectCode& alpha, std::span<const Vec3> x) {
  const FieldEvaluator f(model, alpha, z);
  std::vector<double> out;
  out.reserve(x.size());
  for (const auto& p : x) out.push_back(f.sdf(p));
  return out;
}

struct EncodedForce {
  Eigen::VectorXf contact_feature;
  ForceCode z;
};

inline EncodedForce encode_force(const FieldModel& model, const ContactObservation& obs) {
  require(!obs.locations.empty(), ErrorKind::kInvalidInput,
          "force encoding needs at least one contact location");
  require(obs.reaction.allFinite(), ErrorKind::kInvalidInput, "non-finite reaction force");
  ad::Tape<float> tape;
  Binding<float> bind(model.params, tape, {});
  auto feature = contact_feature(bind, points_var(tape, obs.locations.points));
  auto z = fuse_force(bind, feature, scaled_force<float>(tape, obs.reaction, model.config.force_scale));
  return {feature.value().row(0).transpose(), z.value().row(0).transpose()};
}

/// Force code from an explicit contact feature (used by inference).
inline ForceCode fuse_feature(const FieldModel& model, const Eigen::VectorXf& feature,
                              const Vec3& reaction) {
  require(feature.size() == model.config.contact_feature_dim, ErrorKind::kShape,
          "contact feature dimension mismatch");
  ad::Tape<float> tape;
  Binding<float> bind(model.params, tape, {});
  auto f = tape.constant(feature.transpose());
  return fuse_force(bind, f, scaled_force<float>(tape, reaction, model.config.force_scale))
      .value()
      .row(0)
      .transpose();
}

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte magic, u32 version, u64 metadata length, metadata JSON,
// then every tensor as little-endian float32 in metadata order.

inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'F', 'S', 'D', 'F', 'C', 'K'};

inline void save_model(const FieldModel& m, const io::fs::path& path,
                       const io::Json& provenance = io::Json::object()) {
  io::Json meta;
  meta["config"] = to_json(m.config);
  meta["object_ids"] = m.object_ids;
  io::Json keys = io::Json::array();
  for (const auto& k : m.force_keys) keys.push_back({{"tool_id", k.tool_id}, {"condition", k.condition}});
  meta["force_keys"] = keys;
  meta["pretrained"] = m.pretrained;
  meta["deformation_trained"] = m.deformation_trained;
  meta["provenance"] = provenance;
  io::Json tensors = io::Json::array();
  for (std::size_t i = 0; i < m.params.names.size(); ++i)
    tensors.push_back({{"name", m.params.names[i]},
                       {"group", m.params.groups[i]},
                       {"shape", {m.params.values[i].rows(), m.params.values[i].cols()}}});
  meta["tensors"] = tensors;
  const std::string text = meta.dump();

  if (path.has_parent_path()) io::ensure_directory(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  io::write_le<std::uint32_t>(out, 1);
  io::write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& v : m.params.values)
    io::detail::write_le(out, v.data(), static_cast<std::size_t>(v.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing checkpoint " + path.string());
}

inline FieldModel load_model(const io::fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "checkpoint not found: " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  require(in && std::equal(magic, magic + 8, kCheckpointMagic), ErrorKind::kIo,
          "not a checkpoint file: " + path.string());
  const auto version = io::read_le<std::uint32_t>(in);
  require(version == 1, ErrorKind::kIo, "unsupported checkpoint version");
  const auto len = io::read_le<std::uint64_t>(in);
  require(len < (1ULL << 32), ErrorKind::kIo, "corrupt checkpoint metadata length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(static_cast<bool>(in), ErrorKind::kIo, "truncated checkpoint metadata");

  FieldModel m;
  io::Json meta;
  try {
    meta = io::Json::parse(text);
    m.config = field_config_from_json(meta.at("config"));
    m.object_ids = meta.at("object_ids").get<std::vector<std::string>>();
    for (const auto& k : meta.at("force_keys"))
      m.force_keys.push_back({k.at("tool_id").get<std::string>(), k.at("condition").get<int>()});
    m.pretrained = meta.value("pretrained", false);
    m.deformation_trained = meta.value("deformation_trained", false);
  } catch (const io::Json::exception& e) {
    fail(ErrorKind::kIo, std::string("corrupt checkpoint metadata: ") + e.what());
  }
  validate(m.config);

  // Shapes implied by the architecture; every stored tensor must match.
  const FieldModel reference = init_model(m.config, m.object_ids, m.force_keys, 0);
  for (const auto& t : meta.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("shape").at(0).get<Index>();
    const auto cols = t.at("shape").at(1).get<Index>();
    require(reference.params.has(name), ErrorKind::kShape,
            "checkpoint tensor " + name + " is not part of the architecture");
    const auto& expected = reference.params.at(name);
    require(expected.rows() == rows && expected.cols() == cols, ErrorKind::kShape,
            "checkpoint tensor " + name + " has shape " + std::to_string(rows) + "x" +
                std::to_string(cols) + ", architecture expects " +
                std::to_string(expected.rows()) + "x" + std::to_string(expected.cols()));
    RowMatrix<float> v(rows, cols);
    io::detail::read_le(in, v.data(), static_cast<std::size_t>(v.size()));
    require(static_cast<bool>(in), ErrorKind::kIo, "truncated checkpoint tensor " + name);
    m.params.add(name, t.at("group").get<std::string>(), std::move(v));
  }
  for (const auto& name : reference.params.names)
    require(m.params.has(name), ErrorKind::kShape, "checkpoint is missing tensor " + name);
  return m;
}

}  // namespace defsdf
