#pragma once
// Shared parameter and pose fixtures for the test suites.

#include "avatarforge/bodymodel.hpp"
#include "avatarforge/field_params.hpp"
#include "avatarforge/rng.hpp"

#include <string>
#include <vector>

namespace fixture {

using namespace avatarforge;

// Sixteen levels (32 features) over tiny tables: levels up to resolution 3
// are dense, the rest hash into 64 entries.
inline GridConfig tiny_grid() {
  GridConfig g;
  g.base_resolution = 2;
  g.max_resolution = 8;
  g.log2_table_size = 6;
  return g;
}

// Every level dense so grid features can encode exact linear functions.
inline GridConfig dense_grid() {
  GridConfig g;
  g.base_resolution = 2;
  g.max_resolution = 8;
  g.log2_table_size = 10;
  return g;
}

inline void randomize(FieldParams& p, uint64_t seed, double grid_scale = 0.5, double weight_scale = 0.3) {
  Rng rng(seed);
  p.for_each_tensor([&](const std::string& name, double* d, size_t n, const std::vector<uint64_t>&) {
    const double s = name == "grid" ? grid_scale : weight_scale;
    for (size_t i = 0; i < n; ++i) d[i] = s * rng.normal();
  });
}

inline Vec3 random_in(Rng& rng, double r) { return Vec3(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r)); }

inline const PosedBody& a_pose_body() {
  static const PosedBody body = canonical_a_pose(*builtin_asset());
  return body;
}

// Observed poses: 0 is the A-pose, 1..3 bend limbs and the root.
inline PoseShapeParams observed_pose(int which) {
  PoseShapeParams p = PoseShapeParams::a_pose(*builtin_asset());
  switch (which) {
    case 1:
      p.xi(18, 1) = 0.9;
      p.xi(4, 0) = -0.6;
      p.xi(5, 0) = 0.4;
      break;
    case 2:
      p.xi(0, 1) = 0.5;
      p.xi(16, 2) = 0.3;
      p.xi(19, 0) = -0.7;
      break;
    case 3:
      p.xi(16, 2) = 0.6;
      p.xi(17, 2) = -0.2;
      p.xi(1, 0) = -0.8;
      p.xi(4, 0) = 1.0;
      p.xi(12, 1) = 0.4;
      break;
    default:
      break;
  }
  return p;
}

inline Vec3 vertex(const PosedBody& b, int v) { return b.vertices.row(v).transpose(); }

}  // namespace fixture
