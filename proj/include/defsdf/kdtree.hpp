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

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace defsdf {

struct Neighbor {
  Index index = -1;
  double squared_distance = std::numeric_limits<double>::infinity();
};

/// Exhaustive nearest neighbour; ties resolve to the lowest index.
inline Neighbor brute_force_nearest(std::span<const Vec3> points, const Vec3& query,
                                    Index exclude = -1) {
  Neighbor best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (static_cast<Index>(i) == exclude) continue;
    const double d = (points[i] - query).squaredNorm();
    if (d < best.squared_distance) best = {static_cast<Index>(i), d};
  }
  return best;
}

/// Static 3-d tree over a borrowed point array. Queries answer the exact
/// nearest neighbour (lowest index on ties), identical to brute force.
class KdTree {
 public:
  static constexpr std::size_t kBruteForceBelow = 512;

  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points) : points_(points) {
    if (points_.size() < kBruteForceBelow) return;
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), Index{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<Index>(order_.size()));
  }

  std::size_t size() const { return points_.size(); }
  bool uses_tree() const { return !nodes_.empty(); }

  Neighbor nearest(const Vec3& query) const { return nearest_excluding(query, -1); }

  /// Nearest neighbour ignoring the point with index `exclude`.
  Neighbor nearest_excluding(const Vec3& query, Index exclude) const {
    require(!points_.empty(), ErrorKind::kInvalidInput, "nearest neighbour in an empty set");
    if (nodes_.empty()) return brute_force_nearest(points_, query, exclude);
    Neighbor best;
    search(0, query, best, exclude);
    return best;
  }

 private:
  static constexpr Index kLeafSize = 12;

  struct Node {
    Index begin, end;  // range in order_
    int axis = -1;     // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(Index begin, Index end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (Index i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[static_cast<std::size_t>(order_[i])]);
      hi = hi.cwiseMax(points_[static_cast<std::size_t>(order_[i])]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const Index mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](Index a, Index b) {
                       const double pa = points_[static_cast<std::size_t>(a)][axis];
                       const double pb = points_[static_cast<std::size_t>(b)][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    const double split = points_[static_cast<std::size_t>(order_[mid])][axis];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(int id, const Vec3& q, Neighbor& best, Index exclude) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.axis < 0) {
      for (Index i = n.begin; i < n.end; ++i) {
        const Index p = order_[i];
        if (p == exclude) continue;
        const double d = (points_[static_cast<std::size_t>(p)] - q).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && p < best.index))
          best = {p, d};
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    search(near, q, best, exclude);
    // <= keeps equal-distance candidates on the far side reachable for the
    // lowest-index tie rule.
    if (diff * diff <= best.squared_distance) search(far, q, best, exclude);
  }

  std::span<const Vec3> points_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
};

}  // namespace defsdf
