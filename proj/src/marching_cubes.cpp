#include "avatarforge/mesh.hpp"
#include "mc_tables.hpp"

#include <unordered_map>

namespace avatarforge {

namespace {

constexpr int kCornerOffset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  TriangleMesh mesh;
  if (grid.nx < 2 || grid.ny < 2 || grid.nz < 2) return mesh;

  std::unordered_map<uint64_t, uint32_t> edge_vertex;
  auto vertex_on_edge = [&](int i, int j, int k, int e) -> uint32_t {
    const int* c0 = kCornerOffset[kEdgeCorners[e][0]];
    const int* c1 = kCornerOffset[kEdgeCorners[e][1]];
    // Canonical direction: from the lower lattice node toward +axis.
    int a[3] = {i + c0[0], j + c0[1], k + c0[2]};
    int b[3] = {i + c1[0], j + c1[1], k + c1[2]};
    if (a[0] > b[0] || a[1] > b[1] || a[2] > b[2]) std::swap(a, b);
    const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
    const uint64_t node = (static_cast<uint64_t>(a[2]) * grid.ny + a[1]) * grid.nx + a[0];
    const uint64_t key = node * 3 + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double va = grid.at(a[0], a[1], a[2]);
    const double vb = grid.at(b[0], b[1], b[2]);
    const double denom = vb - va;
    double t = std::abs(denom) > 1e-300 ? (iso - va) / denom : 0.5;
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 pa = grid.node(a[0], a[1], a[2]);
    const Vec3 pb = grid.node(b[0], b[1], b[2]);
    const auto id = static_cast<uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < grid.nz; ++k)
    for (int j = 0; j + 1 < grid.ny; ++j)
      for (int i = 0; i + 1 < grid.nx; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + kCornerOffset[c][0], j + kCornerOffset[c][1], k + kCornerOffset[c][2]) < iso)
            cube |= 1 << c;
        const auto& row = detail::kTriTable[cube];
        for (int t = 0; row[t] != -1; t += 3) {
          // Table winding already faces decreasing values (outward for densities).
          const uint32_t v0 = vertex_on_edge(i, j, k, row[t]);
          const uint32_t v1 = vertex_on_edge(i, j, k, row[t + 1]);
          const uint32_t v2 = vertex_on_edge(i, j, k, row[t + 2]);
          if (v0 == v1 || v1 == v2 || v0 == v2) continue;
          mesh.faces.push_back({v0, v1, v2});
        }
      }
  return mesh;
}

}  // namespace avatarforge
