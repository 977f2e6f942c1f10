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

// Array directories: a JSON manifest (arrays.json) describing named arrays
// plus raw little-endian binary files in row-major layout. Also OBJ and PLY
// import/export for meshes and annotated point clouds.

#include "defsdf/geometry.hpp"
#include "defsdf/sdf_sampling.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace defsdf::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr const char* kManifestName = "arrays.json";

namespace detail {

template <class T>
void write_le(std::ostream& os, const T* data, std::size_t n) {
  static_assert(sizeof(T) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u;
      std::memcpy(&u, data + i, 4);
      u = __builtin_bswap32(u);
      os.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

template <class T>
void read_le(std::istream& is, T* data, std::size_t n) {
  static_assert(sizeof(T) == 4);
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u;
      std::memcpy(&u, data + i, 4);
      u = __builtin_bswap32(u);
      std::memcpy(data + i, &u, 4);
    }
  }
}

}  // namespace detail

/// Single little-endian scalar of any width.
template <class T>
void write_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native != std::endian::little) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  unsigned char bytes[sizeof(T)] = {};
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if constexpr (std::endian::native != std::endian::little) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

namespace detail {

inline std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace detail

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::kIo,
          "cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kIo, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

/// Accumulates arrays for one directory; finish() writes files and manifest.
class ArrayWriter {
 public:
  explicit ArrayWriter(fs::path dir) : dir_(std::move(dir)) {}

  void add_float(const std::string& name, const std::string& file, std::vector<float> data,
                 std::vector<std::size_t> shape) {
    require(detail::product(shape) == data.size(), ErrorKind::kShape,
            "array " + name + " does not match its shape");
    Entry e{name, file, "float32", std::move(shape), std::move(data), {}};
    entries_.push_back(std::move(e));
  }

  void add_int(const std::string& name, const std::string& file, std::vector<std::int32_t> data,
               std::vector<std::size_t> shape) {
    require(detail::product(shape) == data.size(), ErrorKind::kShape,
            "array " + name + " does not match its shape");
    Entry e{name, file, "int32", std::move(shape), {}, std::move(data)};
    entries_.push_back(std::move(e));
  }

  Json& meta() { return meta_; }

  void finish() {
    ensure_directory(dir_);
    std::map<std::string, std::ofstream> files;
    std::map<std::string, std::size_t> offsets;
    Json arrays = Json::array();
    for (const auto& e : entries_) {
      auto [it, fresh] = files.try_emplace(e.file);
      if (fresh) {
        it->second.open(dir_ / e.file, std::ios::binary | std::ios::trunc);
        require(it->second.good(), ErrorKind::kIo, "cannot write " + (dir_ / e.file).string());
      }
      std::size_t& offset = offsets[e.file];
      if (e.dtype == "float32")
        detail::write_le(it->second, e.floats.data(), e.floats.size());
      else
        detail::write_le(it->second, e.ints.data(), e.ints.size());
      arrays.push_back({{"name", e.name},
                        {"file", e.file},
                        {"offset", offset},
                        {"shape", e.shape},
                        {"dtype", e.dtype}});
      offset += detail::product(e.shape) * 4;
    }
    for (auto& [name, f] : files) {
      f.close();
      require(!f.fail(), ErrorKind::kIo, "write failed for " + (dir_ / name).string());
    }
    Json manifest = meta_.is_null() ? Json::object() : meta_;
    manifest["arrays"] = arrays;
    write_json(dir_ / kManifestName, manifest);
  }

 private:
  struct Entry {
    std::string name, file, dtype;
    std::vector<std::size_t> shape;
    std::vector<float> floats;
    std::vector<std::int32_t> ints;
  };
  fs::path dir_;
  std::vector<Entry> entries_;
  Json meta_;
};

class ArrayReader {
 public:
  explicit ArrayReader(fs::path dir) : dir_(std::move(dir)) {
    manifest_ = read_json(dir_ / kManifestName);
    require(manifest_.contains("arrays") && manifest_["arrays"].is_array(), ErrorKind::kIo,
            "manifest in " + dir_.string() + " lists no arrays");
    for (const auto& a : manifest_["arrays"]) index_[a.at("name").get<std::string>()] = a;
  }

  const Json& manifest() const { return manifest_; }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<std::size_t> shape(const std::string& name) const {
    return entry(name).at("shape").get<std::vector<std::size_t>>();
  }

  std::vector<float> floats(const std::string& name) const {
    const Json& e = entry(name);
    require(e.at("dtype") == "float32", ErrorKind::kIo, "array " + name + " is not float32");
    std::vector<float> out(detail::product(shape(name)));
    read_into(e, out.data(), out.size());
    return out;
  }

  std::vector<std::int32_t> ints(const std::string& name) const {
    const Json& e = entry(name);
    require(e.at("dtype") == "int32", ErrorKind::kIo, "array " + name + " is not int32");
    std::vector<std::int32_t> out(detail::product(shape(name)));
    read_into(e, out.data(), out.size());
    return out;
  }

 private:
  const Json& entry(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::kIo,
            "array " + name + " missing from " + (dir_ / kManifestName).string());
    return it->second;
  }

  template <class T>
  void read_into(const Json& e, T* out, std::size_t n) const {
    const fs::path file = dir_ / e.at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    require(in.good(), ErrorKind::kIo, "cannot open " + file.string());
    in.seekg(static_cast<std::streamoff>(e.at("offset").get<std::size_t>()));
    detail::read_le(in, out, n);
    require(in.good(), ErrorKind::kIo, "truncated array data in " + file.string());
  }

  fs::path dir_;
  Json manifest_;
  std::map<std::string, Json> index_;
};

inline std::vector<float> flatten(const std::vector<Vec3>& v) {
  std::vector<float> out;
  out.reserve(v.size() * 3);
  for (const auto& p : v)
    for (int k = 0; k < 3; ++k) out.push_back(static_cast<float>(p[k]));
  return out;
}

inline std::vector<Vec3> unflatten3(const std::vector<float>& v) {
  require(v.size() % 3 == 0, ErrorKind::kShape, "array is not a list of 3-vectors");
  std::vector<Vec3> out(v.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return out;
}

/// Adds "<prefix>points" (and normals) from `cloud` into `file`.
inline void add_cloud(ArrayWriter& w, const std::string& prefix, const std::string& file,
                      const PointCloud& cloud) {
  w.add_float(prefix + "points", file, flatten(cloud.points), {cloud.size(), 3});
  if (cloud.has_normals())
    w.add_float(prefix + "normals", file, flatten(cloud.normals), {cloud.size(), 3});
  w.meta()[prefix + "frame_scale"] = cloud.frame_scale;
}

inline PointCloud read_cloud(const ArrayReader& r, const std::string& prefix) {
  PointCloud c;
  c.points = unflatten3(r.floats(prefix + "points"));
  if (r.has(prefix + "normals")) {
    c.normals = unflatten3(r.floats(prefix + "normals"));
    // float32 storage perturbs unit length slightly.
    for (auto& n : c.normals) n.normalize();
  }
  if (r.manifest().contains(prefix + "frame_scale"))
    c.frame_scale = r.manifest()[prefix + "frame_scale"].get<double>();
  return c;
}

inline void add_sdf(ArrayWriter& w, const std::string& prefix, const std::string& file,
                    const SdfSampleSet& s) {
  const std::size_t n = s.size();
  w.add_float(prefix + "queries", file, flatten(s.queries), {n, 3});
  std::vector<float> values(s.sdf_values.begin(), s.sdf_values.end());
  w.add_float(prefix + "sdf", file, std::move(values), {n});
  std::vector<std::int32_t> mask(s.surface_mask.begin(), s.surface_mask.end());
  w.add_int(prefix + "surface_mask", file, std::move(mask), {n});
  w.add_float(prefix + "normals", file, flatten(s.normals), {n, 3});
  std::vector<std::int32_t> src;
  src.reserve(n);
  for (auto i : s.surface_index) src.push_back(static_cast<std::int32_t>(i));
  w.add_int(prefix + "surface_index", file, std::move(src), {n});
}

inline SdfSampleSet read_sdf(const ArrayReader& r, const std::string& prefix) {
  SdfSampleSet s;
  s.queries = unflatten3(r.floats(prefix + "queries"));
  const auto values = r.floats(prefix + "sdf");
  s.sdf_values.assign(values.begin(), values.end());
  const auto mask = r.ints(prefix + "surface_mask");
  s.surface_mask.assign(mask.begin(), mask.end());
  s.normals = unflatten3(r.floats(prefix + "normals"));
  for (std::size_t i = 0; i < s.normals.size(); ++i)
    if (s.surface_mask[i]) s.normals[i].normalize();
  const auto src = r.ints(prefix + "surface_index");
  s.surface_index.assign(src.begin(), src.end());
  require(s.sdf_values.size() == s.size() && s.surface_mask.size() == s.size() &&
              s.normals.size() == s.size() && s.surface_index.size() == s.size(),
          ErrorKind::kIo, "sdf arrays differ in length");
  return s;
}

/// Writes a cloud as its own array directory.
inline void save_cloud(const fs::path& dir, const PointCloud& cloud) {
  ArrayWriter w(dir);
  add_cloud(w, "", "cloud.bin", cloud);
  w.finish();
}

inline PointCloud load_cloud(const fs::path& dir) { return read_cloud(ArrayReader(dir), ""); }

inline void save_sdf(const fs::path& dir, const SdfSampleSet& s) {
  ArrayWriter w(dir);
  add_sdf(w, "", "sdf.bin", s);
  w.finish();
}

inline SdfSampleSet load_sdf(const fs::path& dir) { return read_sdf(ArrayReader(dir), ""); }

// ---------------------------------------------------------------------------
// Meshes

inline void write_obj(const fs::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

inline TriangleMesh read_obj(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      ls >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i < 0 ? static_cast<int>(mesh.vertices.size()) + i : i - 1);
      }
      require(idx.size() >= 3, ErrorKind::kIo, "OBJ face with fewer than three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  validate(mesh);
  mesh.watertight_flag = is_watertight(mesh);
  return mesh;
}

inline void write_ply(const fs::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  out.precision(9);
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

/// Point cloud PLY with optional normals and one optional scalar per point.
inline void write_ply(const fs::path& path, const PointCloud& cloud,
                      const std::vector<double>* scalar = nullptr,
                      const std::string& scalar_name = "value") {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_normals()) out << "property float nx\nproperty float ny\nproperty float nz\n";
  if (scalar) out << "property float " << scalar_name << "\n";
  out << "end_header\n";
  out.precision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.has_normals()) {
      const Vec3& n = cloud.normals[i];
      out << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    if (scalar) out << ' ' << (*scalar)[i];
    out << '\n';
  }
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

/// Reads an ASCII PLY holding vertices (x, y, z first) and optional triangle faces.
inline TriangleMesh read_ply(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line.rfind("ply", 0) == 0, ErrorKind::kIo, path.string() + " is not a PLY file");
  std::size_t n_vertices = 0, n_faces = 0, vertex_props = 0;
  std::string current;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      require(fmt == "ascii", ErrorKind::kIo, "only ASCII PLY is supported");
    } else if (tag == "element") {
      std::size_t count;
      ls >> current >> count;
      if (current == "vertex") n_vertices = count;
      if (current == "face") n_faces = count;
    } else if (tag == "property" && current == "vertex") {
      ++vertex_props;
    } else if (tag == "end_header") {
      break;
    }
  }
  TriangleMesh mesh;
  mesh.vertices.reserve(n_vertices);
  for (std::size_t i = 0; i < n_vertices; ++i) {
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::kIo, "truncated PLY vertex list");
    std::istringstream ls(line);
    Vec3 v;
    ls >> v.x() >> v.y() >> v.z();
    mesh.vertices.push_back(v);
  }
  for (std::size_t i = 0; i < n_faces; ++i) {
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::kIo, "truncated PLY face list");
    std::istringstream ls(line);
    int count;
    ls >> count;
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (auto& k : idx) ls >> k;
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
  }
  (void)vertex_props;
  validate(mesh);
  mesh.watertight_flag = is_watertight(mesh);
  return mesh;
}

}  // namespace defsdf::io
