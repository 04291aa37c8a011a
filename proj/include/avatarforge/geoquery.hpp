#pragma once

#include "avatarforge/common.hpp"
#include "avatarforge/mesh.hpp"

#include <Eigen/Geometry>

#include <atomic>
#include <memory>
#include <utility>
#include <vector>

namespace avatarforge {

struct SignedDistance {
  // Negative inside the body.
  double d = 0.0;
  Vec3 closest_point = Vec3::Zero();
  // Corner of the closest triangle nearest to the query.
  uint32_t closest_vertex_index = 0;
};

// Exact nearest-vertex search. Ties resolve to the lowest vertex index.
class VertexKdTree {
 public:
  VertexKdTree() = default;
  explicit VertexKdTree(const std::vector<Vec3>& points);

  std::pair<uint32_t, double> nearest(const Vec3& x) const;
  size_t size() const { return points_.size(); }

 private:
  struct Node {
    uint32_t begin, end;  // range in order_
    int axis;             // -1 for leaves
    double split;
    int left, right;
    Eigen::AlignedBox3d box;
  };
  int build(uint32_t begin, uint32_t end);
  void search(int node, const Vec3& x, double& best_d2, uint32_t& best) const;

  std::vector<Vec3> points_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
};

// Triangle BVH with exact closest-point queries and an exact hierarchical
// generalized winding number. Immutable after construction.
class SpatialIndex {
 public:
  explicit SpatialIndex(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  // False for meshes with boundary edges; such meshes only report unsigned
  // distances.
  bool closed() const { return closed_; }
  // Closed mesh with negative signed volume (faces wound inward).
  bool inverted() const { return inverted_; }
  const Eigen::AlignedBox3d& bounds() const { return nodes_.front().box; }

  struct Closest {
    double distance_squared;
    Vec3 point;
    uint32_t face;
  };
  Closest closest_point(const Vec3& x) const;
  double winding_number(const Vec3& x) const;
  // True where the winding number, taken relative to the mesh's global
  // orientation, is at least one half.
  bool inside(const Vec3& x) const;
  SignedDistance signed_distance(const Vec3& x) const;

  struct DistanceBound {
    bool known = false;  // false when the lattice cannot decide
    bool inside = false;
    double lower = 0.0;  // lower bound on the unsigned distance
  };
  // Side of the surface and a distance lower bound at x, read from cached
  // lattice nodes instead of a full query. Closed meshes only.
  DistanceBound distance_bound(const Vec3& x) const;
  std::pair<uint32_t, double> nearest_vertex(const Vec3& x) const { return vertices_.nearest(x); }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1, right = -1;
    uint32_t begin = 0, end = 0;  // triangle range for leaves
    uint32_t boundary_begin = 0, boundary_end = 0;
  };
  int build(uint32_t begin, uint32_t end, std::vector<Vec3>& centroids);
  void collect_boundary(int node);
  double winding_node(int node, const Vec3& x) const;
  // Inside test for a point at unsigned distance dist from the surface.
  bool inside_at_distance(const Vec3& x, double dist) const;

  TriangleMesh mesh_;
  bool closed_ = false;
  bool inverted_ = false;
  std::vector<uint32_t> tri_order_;
  std::vector<Node> nodes_;
  // Directed boundary edges of each node's triangle patch, flattened.
  std::vector<std::array<uint32_t, 2>> boundary_edges_;
  VertexKdTree vertices_;

  // Lattice over the mesh box with lazily filled exact node distances (-1
  // unknown) and inside flags (0 unknown, 1 outside, 2 inside). A query may
  // reuse a node's flag when the node lies inside the query's empty ball.
  struct Lattice {
    Vec3 origin;
    double spacing = 0.0;
    int n[3] = {0, 0, 0};
    std::unique_ptr<std::atomic<double>[]> distance;
    std::unique_ptr<std::atomic<int8_t>[]> flags;
  };
  // Nearest lattice node to x, or -1 outside the lattice.
  long nearest_node(const Vec3& x, Vec3* node) const;
  double node_distance(long i, const Vec3& node) const;
  bool node_inside(long i, const Vec3& node) const;
  Lattice lattice_;
};

// max(0, softplus⁻¹(τ)) with τ = sigmoid(−d/a)/a, evaluated stably for the
// large τ (up to 1/a) that small sharpness values produce.
double density_from_distance(double d, double sharpness);
// Derivative of density_from_distance with respect to d.
double density_from_distance_derivative(double d, double sharpness);
// Largest signed distance with nonzero density: a·ln(1/(a·ln 2) − 1).
double density_cutoff_distance(double sharpness);

// SMPL-derived density prior for one body: signed distance against a live
// mesh, converted to density.
class DensityPrior {
 public:
  DensityPrior(std::shared_ptr<const SpatialIndex> index, double sharpness);

  double density(const Vec3& x) const;
  // Density and its spatial gradient.
  double density(const Vec3& x, Vec3* gradient) const;
  const SpatialIndex& index() const { return *index_; }
  double sharpness() const { return sharpness_; }

 private:
  std::shared_ptr<const SpatialIndex> index_;
  double sharpness_;
  double cutoff_;
  double saturation_;  // past this depth σ̄ is the constant 1/a + log1p(−e^{−1/a})
  Eigen::AlignedBox3d cull_box_;
};

}  // namespace avatarforge
