#include "avatarforge/mesh.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace avatarforge {

namespace {

uint64_t edge_key(uint32_t a, uint32_t b) { return (static_cast<uint64_t>(a) << 32) | b; }

}  // namespace

bool TriangleMesh::is_closed() const {
  if (faces.empty()) return false;
  std::unordered_map<uint64_t, int> directed;
  directed.reserve(faces.size() * 3);
  for (const auto& f : faces)
    for (int e = 0; e < 3; ++e) ++directed[edge_key(f[e], f[(e + 1) % 3])];
  for (const auto& [key, count] : directed) {
    if (count != 1) return false;
    const auto a = static_cast<uint32_t>(key >> 32), b = static_cast<uint32_t>(key);
    const auto it = directed.find(edge_key(b, a));
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

long TriangleMesh::euler_characteristic() const {
  std::unordered_map<uint64_t, int> edges;
  for (const auto& f : faces)
    for (int e = 0; e < 3; ++e) {
      const auto a = std::min(f[e], f[(e + 1) % 3]), b = std::max(f[e], f[(e + 1) % 3]);
      edges[edge_key(a, b)] = 1;
    }
  return static_cast<long>(vertices.size()) - static_cast<long>(edges.size()) + static_cast<long>(faces.size());
}

double TriangleMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& f : faces) v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]]));
  return v / 6.0;
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

void TriangleMesh::flip_orientation() {
  for (auto& f : faces) std::swap(f[1], f[2]);
}

ScalarGrid ScalarGrid::sample(int nx, int ny, int nz, const Vec3& origin, double spacing,
                              const std::function<void(const Points3&, Eigen::Ref<Eigen::VectorXd>)>& fn) {
  ScalarGrid g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.origin = origin;
  g.spacing = spacing;
  g.values.resize(static_cast<size_t>(nx) * ny * nz);
  // One lattice row per batch keeps the callback's working set small.
  Points3 row(3, nx);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) row.col(i) = g.node(i, j, k);
      Eigen::Map<Eigen::VectorXd> out(g.values.data() + (static_cast<size_t>(k) * ny + j) * nx, nx);
      fn(row, out);
    }
  return g;
}

void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  if (format == MeshFormat::kObj) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("cannot open for writing: " + path.string());
    for (const auto& v : mesh.vertices)
      std::fprintf(f, "v %.9g %.9g %.9g\n", static_cast<float>(v.x()), static_cast<float>(v.y()),
                   static_cast<float>(v.z()));
    for (const auto& t : mesh.faces) std::fprintf(f, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    const bool ok = std::ferror(f) == 0;
    std::fclose(f);
    if (!ok) throw Error("write failed: " + path.string());
    return;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path.string());
  os << "ply\nformat binary_little_endian 1.0\n"
     << "element vertex " << mesh.vertices.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "element face " << mesh.faces.size() << "\n"
     << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    const float xyz[3] = {static_cast<float>(v.x()), static_cast<float>(v.y()), static_cast<float>(v.z())};
    os.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  for (const auto& t : mesh.faces) {
    const uint8_t n = 3;
    const int32_t idx[3] = {static_cast<int32_t>(t[0]), static_cast<int32_t>(t[1]), static_cast<int32_t>(t[2])};
    os.write(reinterpret_cast<const char*>(&n), 1);
    os.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
  if (!os) throw Error("write failed: " + path.string());
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("file not found: " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      float x, y, z;
      ls >> x >> y >> z;
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      Face f;
      for (auto& i : f) {
        ls >> i;
        --i;
      }
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("file not found: " + path.string());
  std::string line;
  size_t nv = 0, nf = 0;
  while (std::getline(is, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string a, b;
    ls >> a >> b;
    if (a == "element" && b == "vertex") ls >> nv;
    if (a == "element" && b == "face") ls >> nf;
  }
  TriangleMesh mesh;
  for (size_t i = 0; i < nv; ++i) {
    float xyz[3];
    is.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
    mesh.vertices.emplace_back(xyz[0], xyz[1], xyz[2]);
  }
  for (size_t i = 0; i < nf; ++i) {
    uint8_t n;
    int32_t idx[3];
    is.read(reinterpret_cast<char*>(&n), 1);
    if (n != 3) throw InputError("malformed section: non-triangle face in " + path.string());
    is.read(reinterpret_cast<char*>(idx), sizeof(idx));
    mesh.faces.push_back({static_cast<uint32_t>(idx[0]), static_cast<uint32_t>(idx[1]), static_cast<uint32_t>(idx[2])});
  }
  if (!is) throw InputError("malformed section: truncated PLY " + path.string());
  return mesh;
}

}  // namespace avatarforge
