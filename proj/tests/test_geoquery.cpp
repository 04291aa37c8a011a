#include "avatarforge/bodymodel.hpp"
#include "avatarforge/geoquery.hpp"
#include "avatarforge/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace avatarforge;

namespace {

Vec3 random_point(Rng& rng, const Eigen::AlignedBox3d& box, double pad) {
  return Vec3(rng.uniform(box.min().x() - pad, box.max().x() + pad), rng.uniform(box.min().y() - pad, box.max().y() + pad),
              rng.uniform(box.min().z() - pad, box.max().z() + pad));
}

}  // namespace

TEST_CASE("unit cube signed distances") {
  SpatialIndex index(oracle::unit_cube());
  CHECK(index.closed());
  CHECK(index.signed_distance(Vec3(0, 0, 0)).d == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(index.signed_distance(Vec3(1, 0, 0)).d == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(index.signed_distance(Vec3(0.5, 0.5, 0.5)).d) <= 1e-7);
  CHECK(index.signed_distance(Vec3(0.2, -0.1, 0.3)).d == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(index.winding_number(Vec3(0.1, 0.2, -0.3)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(index.winding_number(Vec3(2, 0.2, -0.3))) < 1e-12);
}

TEST_CASE("empty mesh is rejected") { CHECK_THROWS_WITH_AS(SpatialIndex(TriangleMesh{}), "empty mesh", InputError); }

TEST_CASE("single triangle yields unsigned distance only") {
  TriangleMesh tri;
  tri.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  tri.faces = {{0, 1, 2}};
  SpatialIndex index(tri);
  CHECK_FALSE(index.closed());
  CHECK(index.signed_distance(Vec3(0.2, 0.2, 0.5)).d == doctest::Approx(0.5));
  CHECK(index.signed_distance(Vec3(0.2, 0.2, -0.5)).d == doctest::Approx(0.5));
}

TEST_CASE("body mesh queries agree with brute force") {
  const auto asset = builtin_asset();
  PoseShapeParams params = PoseShapeParams::a_pose(*asset);
  params.xi(18, 1) = 0.8;
  params.xi(4, 0) = 0.5;
  const TriangleMesh mesh = pose_body(*asset, params).mesh();
  SpatialIndex index(mesh);
  REQUIRE(index.closed());
  CHECK_FALSE(index.inverted());
  Rng rng(11);
  const auto box = mesh.bounds();
  int insides = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x = random_point(rng, box, 0.1);
    const SignedDistance sd = index.signed_distance(x);
    const double ref = oracle::unsigned_distance(mesh, x);
    CHECK(std::abs(std::abs(sd.d) - ref) <= 1e-6);
    CHECK((sd.closest_point - x).norm() == doctest::Approx(ref).epsilon(1e-9));
    const double w = oracle::winding_number(mesh, x);
    CHECK(index.winding_number(x) == doctest::Approx(w).epsilon(1e-9));
    if (ref > 1e-6) CHECK((sd.d < 0) == (w >= 0.5));
    insides += sd.d < 0;
    const auto [vi, vd] = index.nearest_vertex(x);
    const auto [oi, od] = oracle::nearest_vertex(mesh.vertices, x);
    CHECK(vi == oi);
    CHECK(vd == doctest::Approx(od).epsilon(1e-12));
  }
  CHECK(insides > 10);
}

TEST_CASE("query results are deterministic across rebuilds") {
  const TriangleMesh mesh = canonical_a_pose(*builtin_asset()).mesh();
  SpatialIndex a(mesh), b(mesh);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = random_point(rng, mesh.bounds(), 0.05);
    const auto sa = a.signed_distance(x), sb = b.signed_distance(x);
    CHECK(sa.d == sb.d);
    CHECK(sa.closest_point == sb.closest_point);
    CHECK(sa.closest_vertex_index == sb.closest_vertex_index);
  }
}

TEST_CASE("flipping all faces flips the sign") {
  TriangleMesh mesh = canonical_a_pose(*builtin_asset()).mesh();
  SpatialIndex a(mesh);
  mesh.flip_orientation();
  SpatialIndex b(mesh);
  CHECK(b.inverted());
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const Vec3 x = random_point(rng, mesh.bounds(), 0.05);
    const double da = a.signed_distance(x).d, db = b.signed_distance(x).d;
    CHECK(db == doctest::Approx(-da).epsilon(1e-12));
  }
}

TEST_CASE("nearest vertex: coincident point and tie-break") {
  std::vector<Vec3> pts;
  Rng rng(9);
  for (int i = 0; i < 40; ++i) pts.emplace_back(rng.uniform(2, 3), rng.uniform(2, 3), rng.uniform(2, 3));
  pts[3] = Vec3(-0.5, 0, 0);
  pts[9] = Vec3(0.5, 0, 0);
  VertexKdTree tree(pts);
  const auto [i7, d7] = tree.nearest(pts[7]);
  CHECK(i7 == 7);
  CHECK(d7 == 0.0);
  CHECK(tree.nearest(Vec3(0, 0.1, -0.2)).first == 3);
  // Same tie with the lower index stored second.
  std::swap(pts[3], pts[9]);
  CHECK(VertexKdTree(pts).nearest(Vec3(0, 0.1, -0.2)).first == 3);
  std::vector<Vec3> dup(20, Vec3(1, 1, 1));
  CHECK(VertexKdTree(dup).nearest(Vec3(0, 0, 0)).first == 0);
}

TEST_CASE("density from distance matches the extended precision oracle") {
  const double a = 0.001;
  for (double d : {-0.1, -0.01, -0.001, 0.0, 0.001, 0.01, 0.1}) {
    const long double ref = oracle::density(d, a);
    const double got = density_from_distance(d, a);
    if (ref == 0.0L)
      CHECK(got == 0.0);
    else
      CHECK(std::abs(got - static_cast<double>(ref)) <= 1e-6 * static_cast<double>(ref));
  }
  CHECK(density_from_distance(0.0, a) == doctest::Approx(500.0).epsilon(1e-9));
  CHECK(density_from_distance(-0.1, a) == doctest::Approx(1000.0).epsilon(1e-9));
  CHECK(density_from_distance(0.1, a) == 0.0);
  CHECK_THROWS_AS(density_from_distance(0.0, 0.0), InputError);
  CHECK_THROWS_AS(density_from_distance(0.0, -1.0), InputError);
}

TEST_CASE("density is monotone and clamps beyond the cutoff") {
  for (double a : {0.001, 0.01, 0.05}) {
    const double cut = density_cutoff_distance(a);
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10000; ++i) {
      const double d = -0.2 + 0.4 * i / 9999.0;
      const double s = density_from_distance(d, a);
      CHECK(s <= prev);
      CHECK(s >= 0.0);
      if (d >= cut) CHECK(s == 0.0);
      prev = s;
    }
    CHECK(density_from_distance(-50 * a, a) == doctest::Approx(1.0 / a).epsilon(1e-3));
  }
  CHECK(density_cutoff_distance(0.001) == doctest::Approx(0.001 * std::log(1.0 / (0.001 * std::numbers::ln2) - 1.0)));
}

TEST_CASE("density derivative matches finite differences") {
  const double a = 0.01;
  for (double d : {-0.05, -0.02, -0.005, 0.0, 0.004, 0.02}) {
    const double h = 1e-7;
    const double fd = (density_from_distance(d + h, a) - density_from_distance(d - h, a)) / (2 * h);
    CHECK(density_from_distance_derivative(d, a) == doctest::Approx(fd).epsilon(1e-5));
  }
  CHECK(density_from_distance_derivative(0.1, a) == 0.0);
}

TEST_CASE("density prior gradient matches finite differences off the medial axis") {
  auto index = std::make_shared<const SpatialIndex>(oracle::unit_cube());
  DensityPrior prior(index, 0.02);
  for (const Vec3& x : {Vec3(0.1, 0.05, 0.45), Vec3(0.1, 0.05, 0.53), Vec3(-0.47, 0.2, -0.1), Vec3(0.52, 0.51, 0.0)}) {
    Vec3 g;
    prior.density(x, &g);
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6;
      Vec3 xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      const double fd = (prior.density(xp) - prior.density(xm)) / (2 * h);
      CHECK(g[c] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
  }
  Vec3 g;
  CHECK(prior.density(Vec3(0.9, 0.9, 0.9), &g) == 0.0);
  CHECK(g == Vec3::Zero());
}
