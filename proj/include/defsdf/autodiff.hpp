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

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its variables. Nodes that do not
// depend on any gradient-requiring leaf record no backward closure, so the
// same code path serves training (float), gradient validation (double) and
// plain evaluation.

#include "defsdf/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace defsdf::ad {

template <class T>
using Matrix = RowMatrix<T>;

template <class T>
class Tape;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  const Matrix<T>& grad() const { return tape_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  T scalar() const { return value()(0, 0); }

  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, {}); }
  Var<T> variable(Matrix<T> value) { return push(std::move(value), true, {}); }
  Var<T> leaf(Matrix<T> value, bool requires_grad) {
    return push(std::move(value), requires_grad, {});
  }

  Var<T> push(Matrix<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), requires_grad, std::move(backward)});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  const Matrix<T>& grad(int id) const {
    static const Matrix<T> kEmpty;
    return nodes_[id].grad.size() ? nodes_[id].grad : kEmpty;
  }

  /// Gradient accumulator for node `id`, zero-initialised on first access.
  Matrix<T>& grad_acc(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  /// Seeds d(root)/d(root) = 1 and propagates to every gradient-requiring leaf.
  void backward(Var<T> root) {
    require(root.rows() == 1 && root.cols() == 1, ErrorKind::kShape,
            "backward() needs a scalar root");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_acc(root.id())(0, 0) = T(1);
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.grad.size() != 0) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <class T>
bool any_grad(std::initializer_list<Var<T>> vars) {
  for (const auto& v : vars)
    if (v.requires_grad()) return true;
  return false;
}

template <class T>
void check_same_tape(const Var<T>& a, const Var<T>& b) {
  require(a.tape() == b.tape(), ErrorKind::kShape, "variables belong to different tapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[n x k] * w[m x k]^T -> [n x m]
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> w) {
  detail::check_same_tape(a, w);
  require(a.cols() == w.cols(), ErrorKind::kShape, "matmul_nt inner dimension mismatch");
  Matrix<T> out = a.value() * w.value().transpose();
  const bool rg = detail::any_grad({a, w});
  auto* tape = a.tape();
  if (!rg) return tape->constant(std::move(out));
  const int ia = a.id(), iw = w.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, iw, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia).noalias() += g * t.value(iw);
    if (t.requires_grad(iw)) t.grad_acc(iw).noalias() += g.transpose() * t.value(ia);
  });
}

/// a[n x k] + b[1 x k], broadcast over rows.
template <class T>
Var<T> add_rowvec(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b);
  require(b.rows() == 1 && b.cols() == a.cols(), ErrorKind::kShape, "add_rowvec shape mismatch");
  Matrix<T> out = a.value().rowwise() + b.value().row(0);
  auto* tape = a.tape();
  if (!detail::any_grad({a, b})) return tape->constant(std::move(out));
  const int ia = a.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia) += g;
    if (t.requires_grad(ib)) t.grad_acc(ib) += g.colwise().sum();
  });
}

/// Per-row affine map computed with fixed-order scalar loops so that every
/// row's result is independent of its position and of the batch size.
template <class T>
Var<T> affine_rows_exact(Var<T> a, Var<T> w, Var<T> b) {
  require(a.cols() == w.cols() && b.rows() == 1 && b.cols() == w.rows(), ErrorKind::kShape,
          "affine_rows_exact shape mismatch");
  const Matrix<T>& av = a.value();
  const Matrix<T>& wv = w.value();
  const Matrix<T>& bv = b.value();
  Matrix<T> out(av.rows(), wv.rows());
  for (Index i = 0; i < av.rows(); ++i) {
    for (Index j = 0; j < wv.rows(); ++j) {
      T acc = bv(0, j);
      for (Index k = 0; k < wv.cols(); ++k) acc += av(i, k) * wv(j, k);
      out(i, j) = acc;
    }
  }
  auto* tape = a.tape();
  if (!detail::any_grad({a, w, b})) return tape->constant(std::move(out));
  const int ia = a.id(), iw = w.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, iw, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia).noalias() += g * t.value(iw);
    if (t.requires_grad(iw)) t.grad_acc(iw).noalias() += g.transpose() * t.value(ia);
    if (t.requires_grad(ib)) t.grad_acc(ib) += g.colwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "add shape mismatch");
  Matrix<T> out = a.value() + b.value();
  auto* tape = a.tape();
  if (!detail::any_grad({a, b})) return tape->constant(std::move(out));
  const int ia = a.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia) += g;
    if (t.requires_grad(ib)) t.grad_acc(ib) += g;
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "sub shape mismatch");
  Matrix<T> out = a.value() - b.value();
  auto* tape = a.tape();
  if (!detail::any_grad({a, b})) return tape->constant(std::move(out));
  const int ia = a.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia) += g;
    if (t.requires_grad(ib)) t.grad_acc(ib) -= g;
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "mul shape mismatch");
  Matrix<T> out = a.value().cwiseProduct(b.value());
  auto* tape = a.tape();
  if (!detail::any_grad({a, b})) return tape->constant(std::move(out));
  const int ia = a.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad_acc(ib) += g.cwiseProduct(t.value(ia));
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Matrix<T> out = a.value() * s;
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true,
                    [ia, self, s](Tape<T>& t) { t.grad_acc(ia) += t.grad(self) * s; });
}

/// sin(omega * a)
template <class T>
Var<T> sine(Var<T> a, T omega) {
  Matrix<T> out = (a.value().array() * omega).sin().matrix();
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, omega](Tape<T>& t) {
    t.grad_acc(ia).array() +=
        t.grad(self).array() * (t.value(ia).array() * omega).cos() * omega;
  });
}

/// Forward-mode tangents through y = sin(omega * pre): given stacked input
/// tangents dpre[(k*n) x w] for k directions, returns omega*cos(omega*pre) .* dpre
/// block by block.
template <class T>
Var<T> sine_tangent(Var<T> pre, Var<T> dpre, T omega) {
  detail::check_same_tape(pre, dpre);
  const Index n = pre.rows();
  require(n > 0 && dpre.rows() % n == 0 && dpre.cols() == pre.cols(), ErrorKind::kShape,
          "sine_tangent shape mismatch");
  const Index k = dpre.rows() / n;
  const Matrix<T> deriv = ((pre.value().array() * omega).cos() * omega).matrix();
  Matrix<T> out(dpre.rows(), dpre.cols());
  for (Index b = 0; b < k; ++b)
    out.middleRows(b * n, n) = dpre.value().middleRows(b * n, n).cwiseProduct(deriv);
  auto* tape = pre.tape();
  if (!detail::any_grad({pre, dpre})) return tape->constant(std::move(out));
  const int ip = pre.id(), id = dpre.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ip, id, self, omega, n, k](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    const auto arg = (t.value(ip).array() * omega).eval();
    if (t.requires_grad(id)) {
      const Matrix<T> deriv = (arg.cos() * omega).matrix();
      auto& acc = t.grad_acc(id);
      for (Index b = 0; b < k; ++b)
        acc.middleRows(b * n, n) += g.middleRows(b * n, n).cwiseProduct(deriv);
    }
    if (t.requires_grad(ip)) {
      const Matrix<T> second = (arg.sin() * (-omega * omega)).matrix();
      const Matrix<T>& dp = t.value(id);
      auto& acc = t.grad_acc(ip);
      for (Index b = 0; b < k; ++b)
        acc += g.middleRows(b * n, n).cwiseProduct(dp.middleRows(b * n, n)).cwiseProduct(second);
    }
  });
}

template <class T>
Var<T> relu(Var<T> a) {
  Matrix<T> out = a.value().cwiseMax(T(0));
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self](Tape<T>& t) {
    t.grad_acc(ia).array() +=
        t.grad(self).array() * (t.value(ia).array() > T(0)).template cast<T>();
  });
}

/// |a| with subgradient 0 at the origin.
template <class T>
Var<T> abs(Var<T> a) {
  Matrix<T> out = a.value().cwiseAbs();
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self](Tape<T>& t) {
    const auto& v = t.value(ia).array();
    t.grad_acc(ia).array() +=
        t.grad(self).array() * ((v > T(0)).template cast<T>() - (v < T(0)).template cast<T>());
  });
}

/// min(hi, max(lo, a)); gradient passes where lo < a < hi.
template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  Matrix<T> out = a.value().cwiseMax(lo).cwiseMin(hi);
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, lo, hi](Tape<T>& t) {
    const auto& v = t.value(ia).array();
    t.grad_acc(ia).array() +=
        t.grad(self).array() * ((v > lo) && (v < hi)).template cast<T>();
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <class T>
Var<T> sum(Var<T> a) {
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self](Tape<T>& t) {
    t.grad_acc(ia).array() += t.grad(self)(0, 0);
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  require(a.value().size() > 0, ErrorKind::kShape, "mean of empty matrix");
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Euclidean norm of every row: [n x k] -> [n x 1]. Gradient 0 for zero rows.
template <class T>
Var<T> row_norm(Var<T> a) {
  Matrix<T> out = a.value().rowwise().norm();
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& v = t.value(ia);
    const Matrix<T>& nrm = t.value(self);
    auto& acc = t.grad_acc(ia);
    for (Index i = 0; i < v.rows(); ++i)
      if (nrm(i, 0) > T(0)) acc.row(i) += v.row(i) * (g(i, 0) / nrm(i, 0));
  });
}

/// Frobenius norm -> [1 x 1]. Gradient 0 at the origin.
template <class T>
Var<T> norm(Var<T> a) {
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().norm();
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self](Tape<T>& t) {
    const T n = t.value(self)(0, 0);
    if (n > T(0)) t.grad_acc(ia) += t.value(ia) * (t.grad(self)(0, 0) / n);
  });
}

/// Row-wise dot product of a[n x k] and b[n x k] -> [n x 1].
template <class T>
Var<T> row_dot(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape,
          "row_dot shape mismatch");
  Matrix<T> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  auto* tape = a.tape();
  if (!detail::any_grad({a, b})) return tape->constant(std::move(out));
  const int ia = a.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia).array() += t.value(ib).array().colwise() * g.col(0).array();
    if (t.requires_grad(ib)) t.grad_acc(ib).array() += t.value(ia).array().colwise() * g.col(0).array();
  });
}

/// Elementwise a / b for column vectors of equal shape.
template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  detail::check_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::kShape, "div shape mismatch");
  Matrix<T> out = a.value().cwiseQuotient(b.value());
  auto* tape = a.tape();
  if (!detail::any_grad({a, b})) return tape->constant(std::move(out));
  const int ia = a.id(), ib = b.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, ib, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad_acc(ia) += g.cwiseQuotient(t.value(ib));
    if (t.requires_grad(ib))
      t.grad_acc(ib).array() -=
          g.array() * t.value(self).array() / t.value(ib).array();
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T s) {
  Matrix<T> out = (a.value().array() + s).matrix();
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true,
                    [ia, self](Tape<T>& t) { t.grad_acc(ia) += t.grad(self); });
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  require(!parts.empty(), ErrorKind::kShape, "concat_cols of nothing");
  const Index n = parts[0].rows();
  Index total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require(p.rows() == n, ErrorKind::kShape, "concat_cols row mismatch");
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix<T> out(n, total);
  Index c = 0;
  std::vector<std::pair<int, Index>> ids;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.emplace_back(p.id(), c);
    c += p.cols();
  }
  auto* tape = parts[0].tape();
  if (!rg) return tape->constant(std::move(out));
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ids, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    for (auto [id, c0] : ids)
      if (t.requires_grad(id)) t.grad_acc(id) += g.middleCols(c0, t.value(id).cols());
  });
}

template <class T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  const Var<T> parts[2] = {a, b};
  return concat_cols<T>(std::span<const Var<T>>(parts, 2));
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  require(!parts.empty(), ErrorKind::kShape, "concat_rows of nothing");
  const Index k = parts[0].cols();
  Index total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require(p.cols() == k, ErrorKind::kShape, "concat_rows column mismatch");
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix<T> out(total, k);
  Index r = 0;
  std::vector<std::pair<int, Index>> ids;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.emplace_back(p.id(), r);
    r += p.rows();
  }
  auto* tape = parts[0].tape();
  if (!rg) return tape->constant(std::move(out));
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ids, self](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    for (auto [id, r0] : ids)
      if (t.requires_grad(id)) t.grad_acc(id) += g.middleRows(r0, t.value(id).rows());
  });
}

template <class T>
Var<T> slice_rows(Var<T> a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), ErrorKind::kShape,
          "slice_rows out of range");
  Matrix<T> out = a.value().middleRows(start, count);
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, start, count](Tape<T>& t) {
    t.grad_acc(ia).middleRows(start, count) += t.grad(self);
  });
}

template <class T>
Var<T> slice_cols(Var<T> a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorKind::kShape,
          "slice_cols out of range");
  Matrix<T> out = a.value().middleCols(start, count);
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, start, count](Tape<T>& t) {
    t.grad_acc(ia).middleCols(start, count) += t.grad(self);
  });
}

/// Takes the contiguous row-major range [offset, offset + rows*cols) of a flat
/// row vector and views it as a rows x cols matrix.
template <class T>
Var<T> unflatten(Var<T> flat, Index offset, Index rows, Index cols) {
  require(flat.rows() == 1 && offset >= 0 && offset + rows * cols <= flat.cols(),
          ErrorKind::kShape, "unflatten out of range");
  Matrix<T> out(rows, cols);
  std::copy_n(flat.value().data() + offset, rows * cols, out.data());
  auto* tape = flat.tape();
  if (!flat.requires_grad()) return tape->constant(std::move(out));
  const int ia = flat.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, offset, rows, cols](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    T* dst = t.grad_acc(ia).data() + offset;
    const T* src = g.data();
    for (Index i = 0; i < rows * cols; ++i) dst[i] += src[i];
  });
}

/// Converts stacked per-direction columns [(k*n) x 1] into rows [n x k].
template <class T>
Var<T> unstack_directions(Var<T> stacked, Index n) {
  require(stacked.cols() == 1 && n > 0 && stacked.rows() % n == 0, ErrorKind::kShape,
          "unstack_directions shape mismatch");
  const Index k = stacked.rows() / n;
  Matrix<T> out(n, k);
  for (Index d = 0; d < k; ++d) out.col(d) = stacked.value().middleRows(d * n, n);
  auto* tape = stacked.tape();
  if (!stacked.requires_grad()) return tape->constant(std::move(out));
  const int ia = stacked.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, n, k](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    auto& acc = t.grad_acc(ia);
    for (Index d = 0; d < k; ++d) acc.middleRows(d * n, n) += g.col(d);
  });
}

/// Converts rows [n x k] (a Jacobian column per direction) into stacked
/// per-direction blocks [(k*n) x c] where each direction block is one column
/// broadcast; used to seed tangents of a composed map.
template <class T>
Var<T> stack_directions(Var<T> rows) {
  const Index n = rows.rows();
  const Index k = rows.cols();
  Matrix<T> out(k * n, 1);
  for (Index d = 0; d < k; ++d) out.middleRows(d * n, n) = rows.value().col(d);
  auto* tape = rows.tape();
  if (!rows.requires_grad()) return tape->constant(std::move(out));
  const int ia = rows.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, n, k](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    auto& acc = t.grad_acc(ia);
    for (Index d = 0; d < k; ++d) acc.col(d) += g.middleRows(d * n, n);
  });
}

/// Column-wise maximum over rows: [n x k] -> [1 x k]. The gradient goes to the
/// first row attaining the maximum.
template <class T>
Var<T> max_pool_rows(Var<T> a) {
  require(a.rows() > 0, ErrorKind::kInvalidInput, "max pool over an empty set");
  const Matrix<T>& v = a.value();
  Matrix<T> out(1, v.cols());
  std::vector<Index> arg(static_cast<std::size_t>(v.cols()), 0);
  for (Index j = 0; j < v.cols(); ++j) {
    T best = v(0, j);
    for (Index i = 1; i < v.rows(); ++i) {
      if (v(i, j) > best) {
        best = v(i, j);
        arg[static_cast<std::size_t>(j)] = i;
      }
    }
    out(0, j) = best;
  }
  auto* tape = a.tape();
  if (!a.requires_grad()) return tape->constant(std::move(out));
  const int ia = a.id();
  int self = static_cast<int>(tape->size());
  return tape->push(std::move(out), true, [ia, self, arg = std::move(arg)](Tape<T>& t) {
    const Matrix<T>& g = t.grad(self);
    auto& acc = t.grad_acc(ia);
    for (Index j = 0; j < g.cols(); ++j) acc(arg[static_cast<std::size_t>(j)], j) += g(0, j);
  });
}

/// Reads the gradient of `v` after backward(); zero matrix if nothing reached it.
template <class T>
Matrix<T> gradient_of(const Var<T>& v) {
  const Matrix<T>& g = v.grad();
  if (g.size() == 0) return Matrix<T>::Zero(v.rows(), v.cols());
  return g;
}

}  // namespace defsdf::ad
