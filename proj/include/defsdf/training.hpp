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

// Two-phase optimization: shape pretraining over the nominal records, then
// deformation training with the shape network and object codes frozen.

#include "defsdf/datagen.hpp"
#include "defsdf/fieldnet.hpp"
#include "defsdf/losses.hpp"
#include "defsdf/optim.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

namespace defsdf {

struct TrainConfig {
  FieldConfig field;
  LossWeights weights;
  std::uint64_t seed = 0;
  int pretrain_epochs = 2000;
  int deform_epochs = 2000;
  std::size_t batch_queries = 4096;
  std::size_t correction_points = 1024;
  double lr_network = 1e-4;
  double lr_codes = 1e-3;
  double lr_floor = 0.05;  // cosine decay ends at lr * lr_floor
  bool freeze_object = true;
  int anchors_per_tool = 1;
  double anchor_contact_radius = 0.01;  // metres
  int log_every = 1;
};

inline void validate(const TrainConfig& c) {
  validate(c.field);
  validate(c.weights);
  require(c.pretrain_epochs >= 0 && c.deform_epochs >= 0, ErrorKind::kConfig,
          "epoch counts must be non-negative");
  require(c.batch_queries >= 1 && c.correction_points >= 1, ErrorKind::kConfig,
          "batch sizes must be positive");
  require(c.lr_network > 0 && c.lr_codes > 0 && c.lr_floor >= 0 && c.lr_floor <= 1,
          ErrorKind::kConfig, "learning rates must be positive and lr_floor in [0, 1]");
  require(c.anchors_per_tool >= 0 && c.anchor_contact_radius > 0 && c.log_every >= 1,
          ErrorKind::kConfig, "invalid anchor or logging settings");
}

inline io::Json to_json(const TrainConfig& c) {
  return {{"field", to_json(c.field)},
          {"weights", to_json(c.weights)},
          {"seed", c.seed},
          {"pretrain_epochs", c.pretrain_epochs},
          {"deform_epochs", c.deform_epochs},
          {"batch_queries", c.batch_queries},
          {"correction_points", c.correction_points},
          {"lr_network", c.lr_network},
          {"lr_codes", c.lr_codes},
          {"lr_floor", c.lr_floor},
          {"freeze_object", c.freeze_object},
          {"anchors_per_tool", c.anchors_per_tool},
          {"anchor_contact_radius", c.anchor_contact_radius},
          {"log_every", c.log_every}};
}

inline TrainConfig train_config_from_json(const io::Json& j) {
  TrainConfig c;
  if (j.contains("field")) c.field = field_config_from_json(j.at("field"));
  if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
  c.seed = j.value("seed", c.seed);
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
  c.deform_epochs = j.value("deform_epochs", c.deform_epochs);
  c.batch_queries = j.value("batch_queries", c.batch_queries);
  c.correction_points = j.value("correction_points", c.correction_points);
  c.lr_network = j.value("lr_network", c.lr_network);
  c.lr_codes = j.value("lr_codes", c.lr_codes);
  c.lr_floor = j.value("lr_floor", c.lr_floor);
  c.freeze_object = j.value("freeze_object", c.freeze_object);
  c.anchors_per_tool = j.value("anchors_per_tool", c.anchors_per_tool);
  c.anchor_contact_radius = j.value("anchor_contact_radius", c.anchor_contact_radius);
  c.log_every = j.value("log_every", c.log_every);
  return c;
}

struct TrainState {
  FieldModel model;
  Adam optimizer;
  int epoch = 0;
  std::vector<io::Json> history;
  std::uint64_t seed = 0;
};

/// One deformation-training record: a dataset deformation or a zero-load
/// anchor built from the nominal record.
struct DeformedRecord {
  int tool = -1;
  int condition = -1;  // -1 for anchors
  const PointCloud* deformed = nullptr;
  const SdfSampleSet* sdf = nullptr;
  ContactObservation contacts;
};

/// Zero-load anchors with u = 0. Anchor a of a tool takes its patch centre from
/// the contact centroid of the tool's a-th training deformation, cycling, or
/// from a random nominal point when the tool has none. Anchors are keyed by
/// condition -1 - a.
inline std::vector<DeformedRecord> anchor_records(const Dataset& ds, const TrainConfig& c) {
  std::vector<DeformedRecord> out;
  for (std::size_t t = 0; t < ds.tools.size(); ++t) {
    const ToolRecord& tool = ds.tools[t];
    const PointCloud& cloud = tool.nominal_cloud;
    Rng rng(derive_seed(c.seed, 500 + t));
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    const double radius = c.anchor_contact_radius / cloud.frame_scale;
    std::vector<Vec3> centres;
    for (const auto& d : ds.deformations)
      if (d.tool_index == static_cast<int>(t) && d.split == "train" && !d.contacts.indices.empty()) {
        Vec3 m = Vec3::Zero();
        for (Index i : d.contacts.indices) m += cloud.points[static_cast<std::size_t>(i)];
        centres.push_back(m / static_cast<double>(d.contacts.indices.size()));
      }
    for (int a = 0; a < c.anchors_per_tool; ++a) {
      DeformedRecord r;
      r.tool = static_cast<int>(t);
      r.condition = -1 - a;
      r.deformed = &cloud;
      r.sdf = &tool.nominal_sdf;
      const Vec3 centre = centres.empty() ? cloud.points[pick(rng)]
                                          : centres[static_cast<std::size_t>(a) % centres.size()];
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        if ((cloud.points[i] - centre).norm() <= radius) {
          r.contacts.indices.push_back(static_cast<Index>(i));
          r.contacts.locations.points.push_back(cloud.points[i]);
        }
      }
      if (r.contacts.indices.empty()) {
        const Index i = KdTree(cloud.points).nearest(centre).index;
        r.contacts.indices.push_back(i);
        r.contacts.locations.points.push_back(cloud.points[static_cast<std::size_t>(i)]);
      }
      r.contacts.locations.frame_scale = cloud.frame_scale;
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline std::vector<DeformedRecord> deformed_records(const Dataset& ds, const TrainConfig& c,
                                                    const std::string& split = "train") {
  std::vector<DeformedRecord> out;
  for (const auto& d : ds.deformations) {
    if (d.split != split) continue;
    DeformedRecord r;
    r.tool = d.tool_index;
    r.condition = d.condition;
    r.deformed = &d.deformed_cloud;
    r.sdf = &d.sdf;
    r.contacts = d.contacts;
    out.push_back(std::move(r));
  }
  if (split == "train") {
    auto anchors = anchor_records(ds, c);
    for (auto& a : anchors) out.push_back(std::move(a));
  }
  return out;
}

namespace detail {

inline void check_finite(double value, const std::string& where) {
  require(std::isfinite(value), ErrorKind::kNumerical, "training diverged: non-finite loss at " + where);
}

inline void apply_gradients(FieldModel& model, Adam& opt,
                            const std::map<std::string, RowMatrix<float>>& grads,
                            double lr_network, double lr_codes, const std::string& where) {
  for (const auto& [name, g] : grads) {
    require(g.allFinite(), ErrorKind::kNumerical,
            "training diverged: non-finite gradient for " + name + " at " + where);
    const std::string& group = model.params.group_of(name);
    const bool code = group == "object_codes" || group == "force_codes";
    opt.step(name, model.params.at(name), g, code ? lr_codes : lr_network);
  }
}

inline void log_line(std::ostream* log, const io::Json& j) {
  if (log) *log << j.dump() << '\n' << std::flush;
}

}  // namespace detail

/// Force-code keys for a dataset: every training deformation plus anchors.
inline std::vector<ForceCodeKey> force_keys_for(const Dataset& ds, const TrainConfig& c) {
  std::vector<ForceCodeKey> keys;
  for (const auto& r : deformed_records(ds, c, "train"))
    keys.push_back({ds.tools[static_cast<std::size_t>(r.tool)].id, r.condition});
  return keys;
}

/// Jointly fits the shape hypernetwork and object codes to the nominal records.
inline TrainState pretrain_nominal(const Dataset& ds, const TrainConfig& c,
                                   std::ostream* log = nullptr) {
  validate(c);
  require(!ds.tools.empty(), ErrorKind::kInvalidDataset, "dataset holds no nominal records");
  std::vector<std::string> ids;
  for (const auto& t : ds.tools) ids.push_back(t.id);
  TrainState st;
  st.seed = c.seed;
  st.model = init_model(c.field, ids, force_keys_for(ds, c), c.seed);
  const float omega = static_cast<float>(c.field.omega);
  const auto layers = target_layers(c.field, 1);
  Rng rng(derive_seed(c.seed, 21));
  const long total_steps = static_cast<long>(c.pretrain_epochs) * static_cast<long>(ds.tools.size());
  long step = 0;
  std::vector<std::size_t> order(ds.tools.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < c.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_total = 0, sum_sdf = 0, sum_normal = 0, sum_latent = 0, sum_hyper = 0;
    for (std::size_t i : order) {
      const ToolRecord& tool = ds.tools[i];
      ad::Tape<float> tape;
      Binding<float> bind(st.model.params, tape, {"psi_o", "object_codes"});
      auto alpha = ad::slice_rows(bind("object_codes"), static_cast<Index>(i), 1);
      auto net = hyper_decode(bind, "psi_o", alpha, layers);
      const SampleRows rows = batch_rows(tool.nominal_sdf, c.batch_queries, rng);
      auto terms = sdf_loss_graph<float>(net, nullptr, tool.nominal_sdf, rows, c.weights, omega,
                                         Reduction::kMean);
      auto latent = latent_prior(alpha);
      auto hyper = hyper_prior(net);
      auto total = ad::add(terms.total,
                           ad::add(ad::scale(latent, static_cast<float>(c.weights.lambda2)),
                                   ad::scale(hyper, static_cast<float>(c.weights.lambda3))));
      const std::string where = "pretrain epoch " + std::to_string(epoch) + ", tool " + tool.id;
      detail::check_finite(total.scalar(), where);
      tape.backward(total);
      const double f = cosine_factor(step++, total_steps, c.lr_floor);
      detail::apply_gradients(st.model, st.optimizer, bind.gradients(), c.lr_network * f,
                              c.lr_codes * f, where);
      sum_total += total.scalar();
      sum_sdf += terms.clamp.scalar();
      sum_normal += terms.normal.valid() ? terms.normal.scalar() : 0.0;
      sum_latent += latent.scalar();
      sum_hyper += hyper.scalar();
    }
    st.epoch = epoch + 1;
    const double n = static_cast<double>(ds.tools.size());
    io::Json entry = {{"phase", "pretrain"},     {"epoch", epoch},
                      {"loss", sum_total / n},   {"sdf", sum_sdf / n},
                      {"normal", sum_normal / n}, {"latent", sum_latent / n},
                      {"hyper", sum_hyper / n}};
    st.history.push_back(entry);
    if (epoch % c.log_every == 0 || epoch + 1 == c.pretrain_epochs) detail::log_line(log, entry);
  }
  st.model.pretrained = true;
  st.optimizer.reset();
  st.epoch = 0;
  return st;
}

/// Recomputes every force-code table row from its record's contacts.
inline void cache_force_codes(FieldModel& model, const std::vector<DeformedRecord>& records,
                              const Dataset& ds) {
  RowMatrix<float>& table = model.params.at("force_codes");
  for (const auto& r : records) {
    const int k = model.force_index(ds.tools[static_cast<std::size_t>(r.tool)].id, r.condition);
    if (k < 0) continue;
    table.row(k) = encode_force(model, r.contacts).z.transpose();
  }
}

struct DeformedStepTerms {
  double total = 0, correction = 0, sdf = 0, normal = 0, hyper = 0, latent = 0, mean_d = 0;
};

/// Trains the deformation hypernetwork and force encoder over all training
/// deformations and zero-load anchors.
inline TrainState train_deformed(TrainState st, const Dataset& ds, const TrainConfig& c,
                                 std::ostream* log = nullptr) {
  validate(c);
  require(st.model.pretrained, ErrorKind::kInvalidState,
          "deformation training needs a pretrained shape model");
  const auto records = deformed_records(ds, c, "train");
  require(!records.empty(), ErrorKind::kInvalidDataset, "no training deformations");
  for (const auto& r : records) {
    require(r.deformed && r.tool >= 0, ErrorKind::kInvalidDataset, "record without a cloud");
    const auto& nominal = ds.tools[static_cast<std::size_t>(r.tool)].nominal_cloud;
    require(nominal.size() == r.deformed->size(), ErrorKind::kInvalidDataset,
            "missing nominal correspondence cloud for a deformation record");
    require(!r.contacts.locations.empty(), ErrorKind::kInvalidDataset,
            "deformation record without contact locations");
  }
  std::vector<std::string> trainable = {"psi_d", "encoder"};
  if (!c.freeze_object) {
    trainable.push_back("psi_o");
    trainable.push_back("object_codes");
  }
  const float omega = static_cast<float>(c.field.omega);
  const auto layers_o = target_layers(st.model.config, 1);
  const auto layers_d = target_layers(st.model.config, 3);
  const double force_scale = st.model.config.force_scale;
  Rng rng(derive_seed(c.seed, 31));
  const long total_steps = static_cast<long>(c.deform_epochs) * static_cast<long>(records.size());
  long step = 0;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < c.deform_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    DeformedStepTerms sums;
    for (std::size_t ri : order) {
      const DeformedRecord& r = records[ri];
      const ToolRecord& tool = ds.tools[static_cast<std::size_t>(r.tool)];
      ad::Tape<float> tape;
      Binding<float> bind(st.model.params, tape, trainable);
      auto alpha = ad::slice_rows(bind("object_codes"), r.tool, 1);
      auto net_o = hyper_decode(bind, "psi_o", alpha, layers_o);
      auto feature = contact_feature(bind, points_var(tape, r.contacts.locations.points));
      auto z = fuse_force(bind, feature, scaled_force<float>(tape, r.contacts.reaction, force_scale));
      auto net_d = hyper_decode(bind, "psi_d", ad::concat_cols(z, alpha), layers_d);

      const SampleRows rows = batch_rows(*r.sdf, c.batch_queries, rng);
      auto terms = sdf_loss_graph<float>(net_o, &net_d, *r.sdf, rows, c.weights, omega,
                                         Reduction::kMean);
      const std::size_t n_corr = std::min(c.correction_points, r.deformed->size());
      const auto idx = subsample_indices(r.deformed->size(), n_corr, rng());
      std::vector<Vec3> p, p_nom;
      p.reserve(n_corr);
      p_nom.reserve(n_corr);
      for (Index i : idx) {
        p.push_back(r.deformed->points[static_cast<std::size_t>(i)]);
        p_nom.push_back(tool.nominal_cloud.points[static_cast<std::size_t>(i)]);
      }
      ad::Var<float> mean_d;
      auto fc = correction_graph<float>(net_d, p, p_nom, c.weights.lambda_c, omega, &mean_d);
      auto hyper = ad::add(hyper_prior(net_d), hyper_prior(net_o));
      auto latent = latent_prior(z);
      auto total = ad::add(
          ad::add(fc, ad::scale(terms.total, static_cast<float>(c.weights.lambda1))),
          ad::add(ad::scale(hyper, static_cast<float>(c.weights.lambda3)),
                  ad::scale(latent, static_cast<float>(c.weights.lambda4))));
      const std::string where = "deform epoch " + std::to_string(epoch) + ", tool " + tool.id +
                                ", condition " + std::to_string(r.condition);
      detail::check_finite(total.scalar(), where);
      tape.backward(total);
      const double f = cosine_factor(step++, total_steps, c.lr_floor);
      detail::apply_gradients(st.model, st.optimizer, bind.gradients(), c.lr_network * f,
                              c.lr_codes * f, where);
      sums.total += total.scalar();
      sums.correction += fc.scalar();
      sums.sdf += terms.clamp.scalar();
      sums.normal += terms.normal.valid() ? terms.normal.scalar() : 0.0;
      sums.hyper += hyper.scalar();
      sums.latent += latent.scalar();
      sums.mean_d += mean_d.scalar();
    }
    st.epoch = epoch + 1;
    const double n = static_cast<double>(records.size());
    io::Json entry = {{"phase", "deform"},           {"epoch", epoch},
                      {"loss", sums.total / n},      {"correction", sums.correction / n},
                      {"sdf", sums.sdf / n},         {"normal", sums.normal / n},
                      {"hyper", sums.hyper / n},     {"latent", sums.latent / n},
                      {"mean_deformation", sums.mean_d / n}};
    st.history.push_back(entry);
    if (epoch % c.log_every == 0 || epoch + 1 == c.deform_epochs) detail::log_line(log, entry);
  }
  cache_force_codes(st.model, records, ds);
  st.model.deformation_trained = true;
  return st;
}

}  // namespace defsdf
