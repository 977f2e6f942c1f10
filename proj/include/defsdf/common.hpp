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

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace defsdf {

using Vec3 = Eigen::Vector3d;
using Index = std::ptrdiff_t;

/// Row-major n x k matrix, the layout used for every batch of points or features.
template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
  kInvalidInput,
  kShape,
  kInvalidSpec,
  kRegime,
  kIo,
  kInvalidDataset,
  kInvalidState,
  kNumerical,
  kEmptySurface,
  kConfig,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kInvalidSpec: return "invalid-spec";
    case ErrorKind::kRegime: return "regime";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInvalidDataset: return "invalid-dataset";
    case ErrorKind::kInvalidState: return "invalid-state";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kEmptySurface: return "empty-surface";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a tag (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a; stable across platforms, used for config hashes.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Worker count: `requested`, or the hardware concurrency when 0.
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end) over contiguous slices of [0, n) on up to `threads`
/// workers. Slices are disjoint, so bodies writing only their own range stay
/// deterministic. The first exception thrown by a worker is rethrown.
inline void parallel_slabs(int n, unsigned threads, const std::function<void(int, int)>& body) {
  threads = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max(n, 1)));
  if (threads <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    const int b = static_cast<int>(static_cast<long>(n) * t / threads);
    const int e = static_cast<int>(static_cast<long>(n) * (t + 1) / threads);
    pool.emplace_back([&, t, b, e] {
      try {
        body(b, e);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace defsdf
