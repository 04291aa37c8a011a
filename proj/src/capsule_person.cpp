#include "avatarforge/bodymodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace avatarforge {

namespace {

constexpr int kJoints = 24;
constexpr double kHeight = 1.7;
constexpr double kSpacing = 0.03;
constexpr double kBlend = 0.03;         // smooth-union radius
constexpr double kSkinFalloff = 0.025;  // skin weight decay length
constexpr double kRegressorSigma = 0.06;
constexpr double kRegressorCutoff = 0.18;

constexpr std::array<int, kJoints> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                               9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

// Left-side (+x) design positions in a feet-at-zero frame; right joints mirror these.
const std::array<Vec3, kJoints> kJointDesign = {
    Vec3(0, 0.92, 0),       Vec3(0.09, 0.87, 0),   Vec3(-0.09, 0.87, 0),  Vec3(0, 1.02, 0),
    Vec3(0.09, 0.50, 0),    Vec3(-0.09, 0.50, 0),  Vec3(0, 1.14, 0),      Vec3(0.09, 0.09, 0),
    Vec3(-0.09, 0.09, 0),   Vec3(0, 1.26, 0),      Vec3(0.09, 0.04, 0.10), Vec3(-0.09, 0.04, 0.10),
    Vec3(0, 1.45, 0),       Vec3(0.07, 1.40, 0),   Vec3(-0.07, 1.40, 0),  Vec3(0, 1.55, 0.01),
    Vec3(0.18, 1.42, 0),    Vec3(-0.18, 1.42, 0),  Vec3(0.45, 1.42, 0),   Vec3(-0.45, 1.42, 0),
    Vec3(0.70, 1.42, 0),    Vec3(-0.70, 1.42, 0),  Vec3(0.76, 1.42, 0),   Vec3(-0.76, 1.42, 0)};

// Far end of each joint's bone: the main child, or a stub for leaves.
Vec3 bone_end(int j) {
  switch (j) {
    case 0: return kJointDesign[3];
    case 9: return kJointDesign[12];
    case 10: return Vec3(0.09, 0.03, 0.16);
    case 11: return Vec3(-0.09, 0.03, 0.16);
    case 15: return Vec3(0, 1.70, 0.01);
    case 22: return Vec3(0.84, 1.42, 0);
    case 23: return Vec3(-0.84, 1.42, 0);
    default:
      for (int c = 0; c < kJoints; ++c)
        if (kParents[c] == j) return kJointDesign[c];
      return kJointDesign[j];
  }
}

struct Capsule {
  Vec3 a, b;
  double radius;
  double z_scale = 1.0;  // < 1 flattens the cross-section front to back
};

// Left half of the body plus the midline parts. Each left capsule is paired
// with its mirror image when the surface is evaluated.
const std::vector<Capsule> kMidline = {
    {Vec3(-0.07, 0.90, 0), Vec3(0.07, 0.90, 0), 0.12, 0.75},  // hips
    {Vec3(0, 0.92, 0), Vec3(0, 1.36, 0), 0.13, 0.75},         // torso
    {Vec3(0, 1.36, 0), Vec3(0, 1.52, 0), 0.055},              // neck
    {Vec3(0, 1.585, 0.01), Vec3(0, 1.625, 0.01), 0.095},      // head
};
const std::vector<Capsule> kLeft = {
    {Vec3(0.09, 0.87, 0), Vec3(0.09, 0.50, 0), 0.075},     // thigh
    {Vec3(0.09, 0.50, 0), Vec3(0.09, 0.09, 0), 0.055},     // calf
    {Vec3(0.09, 0.07, 0), Vec3(0.09, 0.04, 0.14), 0.04},   // foot
    {Vec3(0.05, 1.40, 0), Vec3(0.18, 1.42, 0), 0.06},      // collar
    {Vec3(0.18, 1.42, 0), Vec3(0.45, 1.42, 0), 0.05},      // upper arm
    {Vec3(0.45, 1.42, 0), Vec3(0.70, 1.42, 0), 0.042},     // forearm
    {Vec3(0.70, 1.42, 0), Vec3(0.81, 1.42, 0), 0.035},     // hand
};

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double capsule_sdf(const Capsule& c, Vec3 p) {
  p.z() /= c.z_scale;
  Vec3 a = c.a, b = c.b;
  a.z() /= c.z_scale;
  b.z() /= c.z_scale;
  return (segment_distance(p, a, b) - c.radius) * c.z_scale;
}

Vec3 mirror(const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); }

// Polynomial smooth minimum; symmetric in its arguments bit for bit.
double smin(double a, double b) {
  const double h = std::max(kBlend - std::abs(a - b), 0.0) / kBlend;
  return std::min(a, b) - h * h * kBlend * 0.25;
}

double body_sdf(const Vec3& p) {
  const Vec3 q = mirror(p);
  double d = capsule_sdf(kMidline[0], p);
  for (size_t i = 1; i < kMidline.size(); ++i) d = smin(d, capsule_sdf(kMidline[i], p));
  for (const auto& c : kLeft) d = smin(d, smin(capsule_sdf(c, p), capsule_sdf(c, q)));
  return d;
}

[[gnu::noinline]] double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

BodyModelAsset make_capsule_person() {
  // Lattice symmetric about x = 0: node i sits at (i − m)·h exactly.
  const int m = 32;
  const int nx = 2 * m + 1, ny = 63, nz = 17;
  const Vec3 origin(-m * kSpacing, -0.06, -0.20);
  ScalarGrid grid;
  grid.nx = nx;
  grid.ny = ny;
  grid.nz = nz;
  grid.origin = origin;
  grid.spacing = kSpacing;
  grid.values.resize(static_cast<size_t>(nx) * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const Vec3 p((i - m) * kSpacing, origin.y() + j * kSpacing, origin.z() + k * kSpacing);
        grid.values[(static_cast<size_t>(k) * ny + j) * nx + i] = -body_sdf(p);
      }
  TriangleMesh surface = marching_cubes(grid, 0.0);
  if (!surface.is_closed()) throw Error("capsule-person surface is not closed");

  // Normalize to the target height, centered in the scene box.
  const Eigen::AlignedBox3d box = surface.bounds();
  const double scale = kHeight / box.sizes().y();
  Vec3 center = box.center();
  center.x() = 0.0;
  auto to_scene = [&](const Vec3& p) -> Vec3 { return scale * (p - center); };

  BodyModelAsset a;
  const int V = static_cast<int>(surface.vertices.size());
  a.faces = surface.faces;
  a.parents.assign(kParents.begin(), kParents.end());
  a.template_vertices.resize(V, 3);
  for (int v = 0; v < V; ++v) {
    const Vec3 p = to_scene(surface.vertices[v]);
    for (int c = 0; c < 3; ++c) a.template_vertices(v, c) = round_f32(p[c]);
  }

  // Skin weights from distances to the bones (design frame), top four.
  a.skin_weights.resize(V, kSkinInfluences);
  a.skin_indices.resize(V, kSkinInfluences);
  for (int v = 0; v < V; ++v) {
    const Vec3& p = surface.vertices[v];
    std::array<std::pair<double, int>, kJoints> dist;
    for (int j = 0; j < kJoints; ++j) dist[j] = {segment_distance(p, kJointDesign[j], bone_end(j)), j};
    std::sort(dist.begin(), dist.end());
    double w[kSkinInfluences], sum = 0.0;
    for (int k = 0; k < kSkinInfluences; ++k) sum += w[k] = std::exp(-(dist[k].first - dist[0].first) / kSkinFalloff);
    // Multiples of 2^-24 are exact in f32 and sum exactly in f64; the largest
    // weight takes the remainder so every row sums to one bit for bit.
    double rest = 0.0;
    for (int k = 1; k < kSkinInfluences; ++k) rest += w[k] = std::round(w[k] / sum * 0x1p24) * 0x1p-24;
    w[0] = 1.0 - rest;
    for (int k = 0; k < kSkinInfluences; ++k) {
      a.skin_weights(v, k) = w[k];
      a.skin_indices(v, k) = static_cast<uint32_t>(dist[k].second);
    }
  }

  // Gaussian-windowed vertex average around each design joint.
  a.joint_regressor = Eigen::MatrixXd::Zero(kJoints, V);
  for (int j = 0; j < kJoints; ++j) {
    double sum = 0.0;
    for (int v = 0; v < V; ++v) {
      const double d = (surface.vertices[v] - kJointDesign[j]).norm();
      if (d < kRegressorCutoff) sum += a.joint_regressor(j, v) = std::exp(-d * d / (2 * kRegressorSigma * kRegressorSigma));
    }
    if (sum == 0.0) throw Error("capsule-person joint has no nearby vertices");
    for (int v = 0; v < V; ++v) a.joint_regressor(j, v) = round_f32(a.joint_regressor(j, v) / sum);
  }

  // Ten smooth, mirror-symmetric displacement fields localized along the height.
  constexpr int kShape = 10;
  a.shape_basis.resize(3 * V, kShape);
  for (int v = 0; v < V; ++v) {
    const Vec3 p = a.template_vertices.row(v).transpose();
    for (int s = 0; s < kShape; ++s) {
      const double yc = -0.8 + 0.17 * s;
      const double bump = std::exp(-(p.y() - yc) * (p.y() - yc) / (2 * 0.12 * 0.12));
      const double amp = 0.08;
      a.shape_basis(3 * v + 0, s) = round_f32(amp * p.x() * bump * (1.0 + 0.3 * (s % 2)));
      a.shape_basis(3 * v + 1, s) = round_f32(amp * 0.1 * bump * ((s % 3) - 1));
      a.shape_basis(3 * v + 2, s) = round_f32(amp * p.z() * bump);
    }
  }

  // Small pose correctives concentrated on each joint's skinned region.
  a.pose_basis = Eigen::MatrixXd::Zero(3 * V, 9 * (kJoints - 1));
  for (int v = 0; v < V; ++v)
    for (int k = 0; k < kSkinInfluences; ++k) {
      const int j = static_cast<int>(a.skin_indices(v, k));
      if (j == 0) continue;
      for (int f = 0; f < 9; ++f)
        for (int c = 0; c < 3; ++c)
          a.pose_basis(3 * v + c, 9 * (j - 1) + f) += 0.004 * a.skin_weights(v, k) * std::sin(1.3 * f + 2.1 * c + 0.7 * j);
    }
  a.pose_basis = a.pose_basis.unaryExpr([](double x) { return round_f32(x); });
  // Shoulder features that are nonzero at the A-pose (rotation about z touches
  // the upper-left 2x2 block) carry no corrective, so the A-pose body is T̄.
  for (int j : {16, 17})
    for (int f : {0, 1, 3, 4}) a.pose_basis.col(9 * (j - 1) + f).setZero();

  a.a_pose = RowPoints::Zero(kJoints, 3);
  a.a_pose(16, 2) = round_f32(-std::numbers::pi / 4);
  a.a_pose(17, 2) = round_f32(std::numbers::pi / 4);
  a.validate();
  return a;
}

std::shared_ptr<const BodyModelAsset> builtin_asset() {
  static const std::shared_ptr<const BodyModelAsset> asset = std::make_shared<const BodyModelAsset>(make_capsule_person());
  return asset;
}

}  // namespace avatarforge
