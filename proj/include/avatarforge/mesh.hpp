#pragma once

#include "avatarforge/common.hpp"

#include <Eigen/Geometry>

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

namespace avatarforge {

using Face = std::array<uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }
  // Every directed edge has exactly one opposite partner.
  bool is_closed() const;
  // V - E + F.
  long euler_characteristic() const;
  // Positive for an outward-oriented closed mesh.
  double signed_volume() const;
  Eigen::AlignedBox3d bounds() const;
  void flip_orientation();
};

// Scalar samples on a regular lattice of nx*ny*nz nodes, x fastest.
struct ScalarGrid {
  int nx = 0, ny = 0, nz = 0;
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::vector<double> values;

  double at(int i, int j, int k) const { return values[(static_cast<size_t>(k) * ny + j) * nx + i]; }
  Vec3 node(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }

  // Samples `fn` at every node. `fn` receives a batch of node positions and
  // writes one value per node; batches follow lattice order.
  static ScalarGrid sample(int nx, int ny, int nz, const Vec3& origin, double spacing,
                           const std::function<void(const Points3&, Eigen::Ref<Eigen::VectorXd>)>& fn);
};

// Extracts the boundary of {value >= iso}. Vertices sit on lattice edges
// (linear interpolation) and are welded per edge, so the output is
// deterministic in lattice order. Triangles are oriented with normals
// pointing toward decreasing values.
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso);

enum class MeshFormat { kObj, kPly };

// OBJ: "v x y z" lines then 1-based "f a b c" lines. PLY: binary little-endian
// float32 vertices, uchar-count + int32 face lists.
void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format);
TriangleMesh read_obj(const std::filesystem::path& path);
TriangleMesh read_ply(const std::filesystem::path& path);

}  // namespace avatarforge
