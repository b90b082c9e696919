#pragma once

// Point cloud and mesh files: .xyz (3 or 6 floats per line), .ply (ascii or
// binary little-endian) and .obj (v / f records). Readers report the line
// of the first malformed record.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cloud.hpp"
#include "error.hpp"
#include "mesh.hpp"

namespace fdsdf {

enum class FileFormat { Xyz, Ply, Obj };

inline FileFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".xyz" || ext == ".txt" || ext == ".pts") return FileFormat::Xyz;
  if (ext == ".ply") return FileFormat::Ply;
  if (ext == ".obj") return FileFormat::Obj;
  throw ParseError("unrecognized file extension '" + ext + "' (expected .xyz, .ply or .obj): " + path.string());
}

/// Vertices (with optional normals) and any faces found in a file.
struct Geometry {
  PointCloud cloud;
  std::vector<Triangle> faces;

  TriangleMesh mesh() const { return {cloud.points, faces}; }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t s = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > s) out.push_back(line.substr(s, i - s));
  }
  return out;
}

inline double parse_real(std::string_view tok, std::size_t line) {
  double v = 0.0;
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError("not a number: '" + std::string(tok) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite coordinate '" + std::string(tok) + "'", line);
  return v;
}

inline long long parse_int(std::string_view tok, std::size_t line) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError("not an integer: '" + std::string(tok) + "'", line);
  return v;
}

inline std::ifstream open_input(const std::filesystem::path& path, bool binary = false) {
  if (!std::filesystem::exists(path)) throw ParseError("input not found: " + path.string());
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

inline void require_points(const Geometry& g, const std::filesystem::path& path, std::size_t line) {
  if (g.cloud.empty()) throw ParseError("no points in " + path.string(), line);
}

inline std::string_view trim_comment(std::string_view s) {
  if (auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
  return s;
}

inline Geometry read_xyz(const std::filesystem::path& path) {
  auto in = open_input(path);
  Geometry g;
  std::string line;
  std::size_t ln = 0;
  bool with_normals = false;
  while (std::getline(in, line)) {
    ++ln;
    const auto tok = split_ws(trim_comment(line));
    if (tok.empty()) continue;
    if (tok.size() != 3 && tok.size() != 6)
      throw ParseError("expected 3 or 6 values, found " + std::to_string(tok.size()), ln);
    if (g.cloud.empty()) with_normals = tok.size() == 6;
    if ((tok.size() == 6) != with_normals) throw ParseError("inconsistent column count", ln);
    g.cloud.points.emplace_back(parse_real(tok[0], ln), parse_real(tok[1], ln), parse_real(tok[2], ln));
    if (with_normals)
      g.cloud.normals.emplace_back(parse_real(tok[3], ln), parse_real(tok[4], ln), parse_real(tok[5], ln));
  }
  require_points(g, path, ln);
  return g;
}

inline Geometry read_obj(const std::filesystem::path& path) {
  auto in = open_input(path);
  Geometry g;
  std::string line;
  std::size_t ln = 0;
  std::vector<std::pair<long long, std::size_t>> pending;  // (index, line)
  std::vector<std::vector<long long>> polys;
  std::vector<std::size_t> poly_line;
  while (std::getline(in, line)) {
    ++ln;
    const auto tok = split_ws(trim_comment(line));
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() < 4 || tok.size() > 5) throw ParseError("vertex record needs 3 coordinates", ln);
      g.cloud.points.emplace_back(parse_real(tok[1], ln), parse_real(tok[2], ln), parse_real(tok[3], ln));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError("face record needs at least 3 vertices", ln);
      std::vector<long long> idx;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        long long v = parse_int(tok[i].substr(0, tok[i].find('/')), ln);
        if (v < 0) v += static_cast<long long>(g.cloud.points.size()) + 1;  // relative index
        if (v < 1 || v > static_cast<long long>(g.cloud.points.size()))
          throw ParseError("face index out of range", ln);
        idx.push_back(v - 1);
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i)
        g.faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[i]),
                           static_cast<std::uint32_t>(idx[i + 1])});
    }
    // vn, vt, g, o, s, usemtl, mtllib: not needed
  }
  require_points(g, path, ln);
  return g;
}

// --- PLY ------------------------------------------------------------------

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

inline std::optional<PlyType> ply_type(std::string_view s) {
  if (s == "char" || s == "int8") return PlyType::I8;
  if (s == "uchar" || s == "uint8") return PlyType::U8;
  if (s == "short" || s == "int16") return PlyType::I16;
  if (s == "ushort" || s == "uint16") return PlyType::U16;
  if (s == "int" || s == "int32") return PlyType::I32;
  if (s == "uint" || s == "uint32") return PlyType::U32;
  if (s == "float" || s == "float32") return PlyType::F32;
  if (s == "double" || s == "float64") return PlyType::F64;
  return std::nullopt;
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::I8: case PlyType::U8: return 1;
    case PlyType::I16: case PlyType::U16: return 2;
    case PlyType::I32: case PlyType::U32: case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::F32;
  bool is_list = false;
  PlyType count_type = PlyType::U8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

template <class T>
T load_le(const char* p) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double ply_binary_value(PlyType t, const char* p) {
  switch (t) {
    case PlyType::I8: return load_le<std::int8_t>(p);
    case PlyType::U8: return load_le<std::uint8_t>(p);
    case PlyType::I16: return load_le<std::int16_t>(p);
    case PlyType::U16: return load_le<std::uint16_t>(p);
    case PlyType::I32: return load_le<std::int32_t>(p);
    case PlyType::U32: return load_le<std::uint32_t>(p);
    case PlyType::F32: return load_le<float>(p);
    case PlyType::F64: return load_le<double>(p);
  }
  return 0.0;
}

/// Collects vertex coordinates, normals and faces from decoded records.
class PlyCollector {
 public:
  PlyCollector(const PlyElement& vertex, Geometry& g) : g_(g) {
    for (std::size_t i = 0; i < vertex.props.size(); ++i) {
      const auto& n = vertex.props[i].name;
      for (int k = 0; k < 3; ++k) {
        if (n == std::string(1, "xyz"[k])) pos_[k] = static_cast<int>(i);
        if (n == std::string("n") + "xyz"[k]) nrm_[k] = static_cast<int>(i);
      }
    }
    if (pos_[0] < 0 || pos_[1] < 0 || pos_[2] < 0) throw ParseError("ply vertex element lacks x/y/z", 1);
    has_normals_ = nrm_[0] >= 0 && nrm_[1] >= 0 && nrm_[2] >= 0;
  }

  void vertex(const std::vector<double>& v, std::size_t line) {
    Vec3 p(v[pos_[0]], v[pos_[1]], v[pos_[2]]);
    if (!is_finite(p)) throw ParseError("non-finite vertex coordinate", line);
    g_.cloud.points.push_back(p);
    if (has_normals_) g_.cloud.normals.emplace_back(v[nrm_[0]], v[nrm_[1]], v[nrm_[2]]);
  }

  void face(const std::vector<long long>& idx, std::size_t line, std::size_t vertex_count) {
    if (idx.size() < 3) throw ParseError("face with fewer than 3 vertices", line);
    for (auto i : idx)
      if (i < 0 || static_cast<std::size_t>(i) >= vertex_count) throw ParseError("face index out of range", line);
    for (std::size_t i = 1; i + 1 < idx.size(); ++i)
      g_.faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[i]),
                          static_cast<std::uint32_t>(idx[i + 1])});
  }

 private:
  Geometry& g_;
  int pos_[3] = {-1, -1, -1};
  int nrm_[3] = {-1, -1, -1};
  bool has_normals_ = false;
};

inline Geometry read_ply(const std::filesystem::path& path) {
  auto in = open_input(path, true);
  std::string line;
  std::size_t ln = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") throw ParseError("missing 'ply' magic", 1);
  bool binary = false, have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    if (!next()) throw ParseError("unterminated ply header", ln);
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("bad format line", ln);
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw ParseError("unsupported ply format '" + std::string(tok[1]) + "'", ln);
      have_format = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("bad element line", ln);
      const long long c = parse_int(tok[2], ln);
      if (c < 0) throw ParseError("negative element count", ln);
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(c), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before element", ln);
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        auto ct = ply_type(tok[2]), vt = ply_type(tok[3]);
        if (!ct || !vt) throw ParseError("unknown ply list type", ln);
        p = {std::string(tok[4]), *vt, true, *ct};
      } else if (tok.size() == 3) {
        auto t = ply_type(tok[1]);
        if (!t) throw ParseError("unknown ply type '" + std::string(tok[1]) + "'", ln);
        p = {std::string(tok[2]), *t, false, PlyType::U8};
      } else {
        throw ParseError("bad property line", ln);
      }
      elements.back().props.push_back(p);
    } else {
      throw ParseError("unexpected header line '" + line + "'", ln);
    }
  }
  if (!have_format) throw ParseError("ply header has no format line", ln);
  auto vit = std::find_if(elements.begin(), elements.end(), [](const PlyElement& e) { return e.name == "vertex"; });
  if (vit == elements.end()) throw ParseError("ply has no vertex element", ln);
  Geometry g;
  PlyCollector collect(*vit, g);
  std::size_t vertex_count = vit->count;

  std::vector<char> buf;
  std::size_t record = 0;  // binary: 1-based record counter for messages
  auto read_bytes = [&](std::size_t n) -> const char* {
    buf.resize(n);
    if (!in.read(buf.data(), static_cast<std::streamsize>(n)))
      throw ParseError("truncated binary ply data at record " + std::to_string(record), ln);
    return buf.data();
  };

  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    for (std::size_t r = 0; r < el.count; ++r) {
      std::vector<double> scalars;
      std::vector<long long> list;
      std::size_t where = 0;
      if (!binary) {
        if (!next()) throw ParseError("unexpected end of ply data", ln);
        where = ln;
        const auto tok = split_ws(line);
        std::size_t t = 0;
        auto take = [&]() -> std::string_view {
          if (t >= tok.size()) throw ParseError("too few values in " + el.name + " record", ln);
          return tok[t++];
        };
        for (const auto& p : el.props) {
          if (p.is_list) {
            const long long n = parse_int(take(), ln);
            if (n < 0) throw ParseError("negative list length", ln);
            for (long long i = 0; i < n; ++i) {
              auto s = take();
              if (is_face) list.push_back(parse_int(s, ln));
            }
            scalars.push_back(0.0);
          } else {
            auto s = take();
            double v = 0.0;
            const auto [e, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || e != s.data() + s.size())
              throw ParseError("not a number: '" + std::string(s) + "'", ln);
            scalars.push_back(v);
          }
        }
        if (t != tok.size()) throw ParseError("too many values in " + el.name + " record", ln);
      } else {
        ++record;
        where = ln;
        for (const auto& p : el.props) {
          if (p.is_list) {
            const double n = ply_binary_value(p.count_type, read_bytes(ply_size(p.count_type)));
            if (n < 0) throw ParseError("negative list length", ln);
            const std::size_t sz = ply_size(p.type);
            const char* data = read_bytes(sz * static_cast<std::size_t>(n));
            if (is_face)
              for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
                list.push_back(static_cast<long long>(ply_binary_value(p.type, data + i * sz)));
            scalars.push_back(0.0);
          } else {
            scalars.push_back(ply_binary_value(p.type, read_bytes(ply_size(p.type))));
          }
        }
      }
      if (is_vertex) {
        try {
          collect.vertex(scalars, where);
        } catch (const ParseError& e) {
          if (binary) throw ParseError(std::string(e.what()) + " at vertex " + std::to_string(r), ln);
          throw;
        }
      } else if (is_face) {
        collect.face(list, where, vertex_count);
      }
    }
  }
  require_points(g, path, ln);
  return g;
}

}  // namespace detail

inline Geometry load_geometry(const std::filesystem::path& path, std::optional<FileFormat> format = std::nullopt) {
  switch (format.value_or(format_from_path(path))) {
    case FileFormat::Xyz: return detail::read_xyz(path);
    case FileFormat::Ply: return detail::read_ply(path);
    case FileFormat::Obj: return detail::read_obj(path);
  }
  throw ParseError("unknown format");
}

/// Vertices of the file as a point cloud (faces are ignored).
inline PointCloud load_cloud(const std::filesystem::path& path, std::optional<FileFormat> format = std::nullopt) {
  return load_geometry(path, format).cloud;
}

inline TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<FileFormat> format = std::nullopt) {
  auto g = load_geometry(path, format);
  if (g.faces.empty()) throw ParseError("no faces in " + path.string());
  return g.mesh();
}

// --- writers ----------------------------------------------------------------

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

template <class T>
void put_le(std::ostream& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.write(b, sizeof(T));
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace detail

struct PlyOptions {
  bool binary = false;
  const std::vector<double>* vertex_scalar = nullptr;  // optional per-vertex attribute
  std::string scalar_name = "distance";
};

/// Writes vertices (+ normals, + optional scalar) and faces as PLY.
inline void write_ply(const std::filesystem::path& path, const std::vector<Vec3>& vertices,
                      const std::vector<Vec3>& normals, const std::vector<Triangle>& faces,
                      const PlyOptions& opt = {}) {
  const bool with_normals = !normals.empty();
  if (with_normals && normals.size() != vertices.size()) throw ContractViolation("write_ply: normal count mismatch");
  if (opt.vertex_scalar && opt.vertex_scalar->size() != vertices.size())
    throw ContractViolation("write_ply: scalar count mismatch");
  auto out = detail::open_output(path, opt.binary);
  out << "ply\nformat " << (opt.binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (with_normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (opt.vertex_scalar) out << "property double " << opt.scalar_name << "\n";
  if (!faces.empty()) out << "element face " << faces.size() << "\nproperty list uchar int vertex_indices\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    std::vector<double> row = {vertices[i].x(), vertices[i].y(), vertices[i].z()};
    if (with_normals) row.insert(row.end(), {normals[i].x(), normals[i].y(), normals[i].z()});
    if (opt.vertex_scalar) row.push_back((*opt.vertex_scalar)[i]);
    if (opt.binary) {
      for (double v : row) detail::put_le(out, v);
    } else {
      for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << row[k];
      out << "\n";
    }
  }
  for (const auto& f : faces) {
    if (opt.binary) {
      detail::put_le<std::uint8_t>(out, 3);
      for (auto i : f) detail::put_le(out, static_cast<std::int32_t>(i));
    } else {
      out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    }
  }
  detail::finish(out, path);
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& cloud,
                        std::optional<FileFormat> format = std::nullopt, bool binary_ply = false) {
  switch (format.value_or(format_from_path(path))) {
    case FileFormat::Xyz: {
      auto out = detail::open_output(path);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out << p.x() << " " << p.y() << " " << p.z();
        if (cloud.has_normals()) out << " " << cloud.normals[i].x() << " " << cloud.normals[i].y() << " "
                                     << cloud.normals[i].z();
        out << "\n";
      }
      detail::finish(out, path);
      return;
    }
    case FileFormat::Ply:
      write_ply(path, cloud.points, cloud.has_normals() ? cloud.normals : std::vector<Vec3>{}, {},
                PlyOptions{binary_ply, nullptr, "distance"});
      return;
    case FileFormat::Obj: {
      auto out = detail::open_output(path);
      for (const auto& p : cloud.points) out << "v " << p.x() << " " << p.y() << " " << p.z() << "\n";
      detail::finish(out, path);
      return;
    }
  }
}

inline void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh,
                       const std::vector<double>* vertex_scalar = nullptr) {
  mesh.validate();
  switch (format_from_path(path)) {
    case FileFormat::Obj: {
      auto out = detail::open_output(path);
      for (const auto& p : mesh.vertices) out << "v " << p.x() << " " << p.y() << " " << p.z() << "\n";
      for (const auto& f : mesh.triangles) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
      detail::finish(out, path);
      return;
    }
    case FileFormat::Ply:
      write_ply(path, mesh.vertices, {}, mesh.triangles, PlyOptions{false, vertex_scalar, "distance"});
      return;
    default:
      throw ContractViolation("meshes are written as .obj or .ply");
  }
}

}  // namespace fdsdf
