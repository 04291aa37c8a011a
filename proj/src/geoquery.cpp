#include "avatarforge/geoquery.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace avatarforge {

namespace {

constexpr uint32_t kLeafTriangles = 4;
constexpr uint32_t kLeafPoints = 8;
constexpr int kLatticeCells = 128;  // along the longest box side

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Signed solid angle of triangle abc seen from p (Van Oosterom & Strackee).
double solid_angle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ra = a - p, rb = b - p, rc = c - p;
  const double la = ra.norm(), lb = rb.norm(), lc = rc.norm();
  const double num = ra.dot(rb.cross(rc));
  const double den = la * lb * lc + ra.dot(rb) * lc + ra.dot(rc) * lb + rb.dot(rc) * la;
  return 2.0 * std::atan2(num, den);
}

uint64_t edge_key(uint32_t a, uint32_t b) { return (static_cast<uint64_t>(a) << 32) | b; }

}  // namespace

// ---------------------------------------------------------------------------
// VertexKdTree

VertexKdTree::VertexKdTree(const std::vector<Vec3>& points) : points_(points) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, static_cast<uint32_t>(points_.size()));
}

int VertexKdTree::build(uint32_t begin, uint32_t end) {
  const int id = static_cast<int>(nodes_.size());
  Eigen::AlignedBox3d box;
  for (uint32_t i = begin; i < end; ++i) box.extend(points_[order_[i]]);
  nodes_.push_back({begin, end, -1, 0.0, -1, -1, box});
  if (end - begin <= kLeafPoints) return id;
  int axis;
  box.sizes().maxCoeff(&axis);
  const uint32_t mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](uint32_t a, uint32_t b) {
    const double pa = points_[a][axis], pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void VertexKdTree::search(int node_id, const Vec3& x, double& best_d2, uint32_t& best) const {
  const Node& node = nodes_[node_id];
  if (node.box.squaredExteriorDistance(x) > best_d2) return;
  if (node.axis < 0) {
    for (uint32_t i = node.begin; i < node.end; ++i) {
      const uint32_t idx = order_[i];
      const double d2 = (points_[idx] - x).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
    return;
  }
  const double diff = x[node.axis] - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  search(near, x, best_d2, best);
  // Equality is still explored so lower-index ties on the far side win.
  if (diff * diff <= best_d2) search(far, x, best_d2, best);
}

std::pair<uint32_t, double> VertexKdTree::nearest(const Vec3& x) const {
  if (points_.empty()) throw Error("nearest vertex query on an empty point set");
  double best_d2 = std::numeric_limits<double>::infinity();
  uint32_t best = std::numeric_limits<uint32_t>::max();
  search(0, x, best_d2, best);
  return {best, std::sqrt(best_d2)};
}

// ---------------------------------------------------------------------------
// SpatialIndex

SpatialIndex::SpatialIndex(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  if (mesh_.faces.empty() || mesh_.vertices.empty()) throw InputError("empty mesh");
  for (const auto& f : mesh_.faces)
    for (auto v : f)
      if (v >= mesh_.vertices.size()) throw InputError("face references a missing vertex");
  closed_ = mesh_.is_closed();
  inverted_ = closed_ && mesh_.signed_volume() < 0.0;

  std::vector<Vec3> centroids(mesh_.faces.size());
  for (size_t i = 0; i < mesh_.faces.size(); ++i) {
    const auto& f = mesh_.faces[i];
    centroids[i] = (mesh_.vertices[f[0]] + mesh_.vertices[f[1]] + mesh_.vertices[f[2]]) / 3.0;
  }
  tri_order_.resize(mesh_.faces.size());
  std::iota(tri_order_.begin(), tri_order_.end(), 0u);
  nodes_.reserve(2 * mesh_.faces.size() / kLeafTriangles + 1);
  build(0, static_cast<uint32_t>(mesh_.faces.size()), centroids);
  collect_boundary(0);
  vertices_ = VertexKdTree(mesh_.vertices);

  if (closed_) {
    const Eigen::AlignedBox3d& box = bounds();
    const double h = std::max(box.sizes().maxCoeff(), 1e-9) / kLatticeCells;
    lattice_.spacing = h;
    lattice_.origin = box.min() - Vec3::Constant(h);
    size_t count = 1;
    for (int a = 0; a < 3; ++a) {
      lattice_.n[a] = static_cast<int>(std::ceil(box.sizes()[a] / h)) + 3;
      count *= static_cast<size_t>(lattice_.n[a]);
    }
    lattice_.distance = std::make_unique<std::atomic<double>[]>(count);
    lattice_.flags = std::make_unique<std::atomic<int8_t>[]>(count);
    for (size_t i = 0; i < count; ++i) {
      lattice_.distance[i].store(-1.0, std::memory_order_relaxed);
      lattice_.flags[i].store(0, std::memory_order_relaxed);
    }
  }
}

int SpatialIndex::build(uint32_t begin, uint32_t end, std::vector<Vec3>& centroids) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, cbox;
  for (uint32_t i = begin; i < end; ++i) {
    const auto& f = mesh_.faces[tri_order_[i]];
    for (auto v : f) box.extend(mesh_.vertices[v]);
    cbox.extend(centroids[tri_order_[i]]);
  }
  nodes_[id].box = box;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafTriangles) return id;
  int axis;
  cbox.sizes().maxCoeff(&axis);
  const uint32_t mid = (begin + end) / 2;
  std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid, tri_order_.begin() + end,
                   [&](uint32_t a, uint32_t b) {
                     const double ca = centroids[a][axis], cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(begin, mid, centroids);
  const int right = build(mid, end, centroids);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void SpatialIndex::collect_boundary(int node_id) {
  Node& node = nodes_[node_id];
  if (node.left >= 0) {
    collect_boundary(node.left);
    collect_boundary(node.right);
  }
  // Directed edges without an opposite partner inside the patch.
  std::unordered_map<uint64_t, int> count;
  for (uint32_t i = node.begin; i < node.end; ++i) {
    const auto& f = mesh_.faces[tri_order_[i]];
    for (int e = 0; e < 3; ++e) ++count[edge_key(f[e], f[(e + 1) % 3])];
  }
  Node& n = nodes_[node_id];
  n.boundary_begin = static_cast<uint32_t>(boundary_edges_.size());
  for (uint32_t i = n.begin; i < n.end; ++i) {
    const auto& f = mesh_.faces[tri_order_[i]];
    for (int e = 0; e < 3; ++e) {
      const uint32_t a = f[e], b = f[(e + 1) % 3];
      auto fwd = count.find(edge_key(a, b));
      auto rev = count.find(edge_key(b, a));
      if (rev != count.end() && rev->second > 0 && fwd->second > 0) {
        // Cancel one matched pair.
        --rev->second;
        --fwd->second;
        continue;
      }
      if (fwd->second > 0) {
        --fwd->second;
        boundary_edges_.push_back({a, b});
      }
    }
  }
  n.boundary_end = static_cast<uint32_t>(boundary_edges_.size());
}

SpatialIndex::Closest SpatialIndex::closest_point(const Vec3& x) const {
  Closest best{std::numeric_limits<double>::infinity(), Vec3::Zero(), 0};
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squaredExteriorDistance(x) > best.distance_squared) continue;
    if (node.left < 0) {
      for (uint32_t i = node.begin; i < node.end; ++i) {
        const uint32_t fi = tri_order_[i];
        const auto& f = mesh_.faces[fi];
        const Vec3 p = closest_on_triangle(x, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
        const double d2 = (p - x).squaredNorm();
        if (d2 < best.distance_squared || (d2 == best.distance_squared && fi < best.face)) best = {d2, p, fi};
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squaredExteriorDistance(x);
    const double dr = nodes_[node.right].box.squaredExteriorDistance(x);
    // Push the farther child first so the nearer one is visited next.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

double SpatialIndex::winding_node(int node_id, const Vec3& x) const {
  const Node& node = nodes_[node_id];
  const uint32_t triangles = node.end - node.begin;
  const uint32_t boundary = node.boundary_end - node.boundary_begin;
  if (!node.box.contains(x) && boundary < triangles) {
    // Outside the patch's box the patch and any cap sharing its boundary have
    // equal winding numbers; use the fan from the box center.
    if (boundary == 0) return 0.0;
    const Vec3 apex = node.box.center();
    double sum = 0.0;
    for (uint32_t i = node.boundary_begin; i < node.boundary_end; ++i) {
      const auto& e = boundary_edges_[i];
      sum += solid_angle(x, apex, mesh_.vertices[e[0]], mesh_.vertices[e[1]]);
    }
    return sum;
  }
  if (node.left < 0) {
    double sum = 0.0;
    for (uint32_t i = node.begin; i < node.end; ++i) {
      const auto& f = mesh_.faces[tri_order_[i]];
      sum += solid_angle(x, mesh_.vertices[f[0]], mesh_.vertices[f[1]], mesh_.vertices[f[2]]);
    }
    return sum;
  }
  return winding_node(node.left, x) + winding_node(node.right, x);
}

double SpatialIndex::winding_number(const Vec3& x) const {
  return winding_node(0, x) / (4.0 * std::numbers::pi);
}

bool SpatialIndex::inside(const Vec3& x) const {
  if (!closed_) return false;
  const double w = winding_number(x);
  return (inverted_ ? w + 1.0 : w) >= 0.5;
}

long SpatialIndex::nearest_node(const Vec3& x, Vec3* node) const {
  if (!lattice_.flags) return -1;
  long idx[3];
  for (int a = 0; a < 3; ++a) {
    const double u = std::round((x[a] - lattice_.origin[a]) / lattice_.spacing);
    if (!(u >= 0.0 && u < lattice_.n[a])) return -1;
    idx[a] = static_cast<long>(u);
    (*node)[a] = lattice_.origin[a] + static_cast<double>(idx[a]) * lattice_.spacing;
  }
  return idx[0] + lattice_.n[0] * (idx[1] + lattice_.n[1] * idx[2]);
}

double SpatialIndex::node_distance(long i, const Vec3& node) const {
  double d = lattice_.distance[i].load(std::memory_order_relaxed);
  if (d < 0.0) {
    d = std::sqrt(closest_point(node).distance_squared);
    lattice_.distance[i].store(d, std::memory_order_relaxed);
  }
  return d;
}

bool SpatialIndex::node_inside(long i, const Vec3& node) const {
  int8_t flag = lattice_.flags[i].load(std::memory_order_relaxed);
  if (flag != 0) return flag == 2;
  // A known axis neighbor inside this node's empty ball shares its side.
  const double h = lattice_.spacing;
  const double d = node_distance(i, node);
  if (h < d * (1.0 - 1e-9)) {
    const long nx = lattice_.n[0], ny = lattice_.n[1], nz = lattice_.n[2];
    const long ix = i % nx, iy = (i / nx) % ny, iz = i / (nx * ny);
    const long step[3] = {1, nx, nx * ny};
    const long at[3] = {ix, iy, iz}, lim[3] = {nx, ny, nz};
    for (int a = 0; a < 3 && flag == 0; ++a)
      for (int s = -1; s <= 1 && flag == 0; s += 2) {
        if (at[a] + s < 0 || at[a] + s >= lim[a]) continue;
        flag = lattice_.flags[i + s * step[a]].load(std::memory_order_relaxed);
      }
  }
  if (flag == 0) flag = inside(node) ? 2 : 1;
  lattice_.flags[i].store(flag, std::memory_order_relaxed);
  return flag == 2;
}

bool SpatialIndex::inside_at_distance(const Vec3& x, double dist) const {
  if (!closed_) return false;
  Vec3 node;
  const long i = nearest_node(x, &node);
  // The open ball of radius dist around x holds no surface, so the winding
  // number at any node inside it equals the one at x.
  if (i >= 0 && (node - x).norm() < dist * (1.0 - 1e-9)) return node_inside(i, node);
  return inside(x);
}

SpatialIndex::DistanceBound SpatialIndex::distance_bound(const Vec3& x) const {
  DistanceBound b;
  Vec3 node;
  const long i = nearest_node(x, &node);
  if (i < 0) return b;
  const double r = (node - x).norm();
  const double lower = node_distance(i, node) - r;
  if (!(r < lower * (1.0 - 1e-9))) return b;
  b.known = true;
  b.inside = node_inside(i, node);
  b.lower = lower * (1.0 - 1e-12);
  return b;
}

SignedDistance SpatialIndex::signed_distance(const Vec3& x) const {
  const Closest c = closest_point(x);
  SignedDistance out;
  out.closest_point = c.point;
  const auto& f = mesh_.faces[c.face];
  double best = std::numeric_limits<double>::infinity();
  for (auto v : f) {
    const double d2 = (mesh_.vertices[v] - x).squaredNorm();
    if (d2 < best) {
      best = d2;
      out.closest_vertex_index = v;
    }
  }
  const double dist = std::sqrt(c.distance_squared);
  out.d = (dist > 0.0 && inside_at_distance(x, dist)) ? -dist : dist;
  return out;
}

// ---------------------------------------------------------------------------
// Density prior

double density_from_distance(double d, double a) {
  if (!(a > 0.0)) throw InputError("density sharpness must be positive");
  const double z = -d / a;
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  const double tau = s / a;
  if (tau <= std::numbers::ln2) return 0.0;
  const double inv = tau < 20.0 ? std::log(std::expm1(tau)) : tau + std::log1p(-std::exp(-tau));
  return std::max(0.0, inv);
}

double density_from_distance_derivative(double d, double a) {
  if (!(a > 0.0)) throw InputError("density sharpness must be positive");
  const double z = -d / a;
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  const double tau = s / a;
  if (tau <= std::numbers::ln2) return 0.0;
  // d/dτ softplus⁻¹(τ) = 1 / (1 − e^{−τ});  dτ/dd = −s(1 − s)/a².
  return -(s * (1.0 - s) / (a * a)) / (-std::expm1(-tau));
}

double density_cutoff_distance(double a) { return a * std::log(1.0 / (a * std::numbers::ln2) - 1.0); }

DensityPrior::DensityPrior(std::shared_ptr<const SpatialIndex> index, double sharpness)
    : index_(std::move(index)), sharpness_(sharpness) {
  if (!(sharpness > 0.0)) throw InputError("density sharpness must be positive");
  cutoff_ = density_cutoff_distance(sharpness);
  // e^{−d/a} < 2^-56 makes the sigmoid round to exactly one.
  saturation_ = sharpness * 56.0 * std::numbers::ln2;
  cull_box_ = index_->bounds();
  const Vec3 pad = Vec3::Constant(std::max(cutoff_, 0.0) * 1.01 + 1e-9);
  cull_box_.min() -= pad;
  cull_box_.max() += pad;
}

double DensityPrior::density(const Vec3& x) const { return density(x, nullptr); }

double DensityPrior::density(const Vec3& x, Vec3* gradient) const {
  // Outside the padded mesh box a positively oriented body is farther than the
  // cutoff, where the density is exactly zero.
  if (!index_->inverted() && !cull_box_.contains(x)) {
    if (gradient) gradient->setZero();
    return 0.0;
  }
  const SpatialIndex::DistanceBound bound = index_->distance_bound(x);
  if (bound.known) {
    if (!bound.inside && bound.lower > cutoff_ * 1.01 + 1e-9) {
      if (gradient) gradient->setZero();
      return 0.0;
    }
    if (bound.inside && bound.lower > saturation_) {
      if (gradient) gradient->setZero();
      return density_from_distance(-bound.lower, sharpness_);
    }
  }
  const SignedDistance sd = index_->signed_distance(x);
  if (gradient) {
    const double dist = std::abs(sd.d);
    if (dist > 0.0) {
      const Vec3 dir = (x - sd.closest_point) / dist;
      *gradient = density_from_distance_derivative(sd.d, sharpness_) * (sd.d < 0 ? -dir : dir);
    } else {
      gradient->setZero();
    }
  }
  return density_from_distance(sd.d, sharpness_);
}

}  // namespace avatarforge
