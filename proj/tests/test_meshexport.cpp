#include "avatarforge/meshexport.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace avatarforge;

namespace {

DensityFn sphere_density(double radius) {
  return [radius](const Points3& x, Eigen::Ref<Eigen::VectorXd> out) {
    for (Eigen::Index i = 0; i < x.cols(); ++i) out[i] = x.col(i).norm() < radius ? 1000.0 : 0.0;
  };
}

double max_radius_error(const TriangleMesh& m, double r) {
  double worst = 0.0;
  for (const auto& v : m.vertices) worst = std::max(worst, std::abs(v.norm() - r));
  return worst;
}

}  // namespace

TEST_CASE("analytic sphere at 128³") {
  ExtractionConfig c;
  c.iso_level = 500.0;
  const TriangleMesh m = extract_mesh(sphere_density(0.5), c);
  REQUIRE(!m.empty());
  CHECK(max_radius_error(m, 0.5) <= 2.0 / 128);
  CHECK(m.is_closed());
  CHECK(m.euler_characteristic() == 2);
  CHECK(m.signed_volume() > 0.0);
}

TEST_CASE("refining the grid does not move the sphere away") {
  ExtractionConfig c;
  c.iso_level = 500.0;
  double previous = 1.0;
  for (int res : {16, 32, 64}) {
    c.grid_resolution = res;
    const TriangleMesh m = extract_mesh(sphere_density(0.5), c);
    const double err = max_radius_error(m, 0.5);
    CHECK(err <= previous);
    CHECK(m.euler_characteristic() == 2);
    previous = err;
  }
}

TEST_CASE("zero field without prior yields an empty mesh") {
  const FieldParams p = FieldParams::zeros(fixture::tiny_grid());
  const SpaceContext ctx = SpaceContext::canonical(fixture::a_pose_body(), 1e-3, false);
  ExtractionConfig c;
  c.grid_resolution = 16;
  const TriangleMesh m = extract_mesh(p, ctx, c);
  CHECK(m.empty());
  CHECK(m.vertices.empty());
}

TEST_CASE("prior-only body mesh tracks the source surface") {
  const FieldParams p = FieldParams::initialize(GridConfig{}, 1);
  const SpaceContext ctx = SpaceContext::canonical(fixture::a_pose_body(), 1e-3);
  ExtractionConfig c;
  const TriangleMesh m = extract_mesh(p, ctx, c);
  REQUIRE(!m.empty());
  const double voxel_diagonal = std::sqrt(3.0) * 2.0 / c.grid_resolution;
  CHECK(oracle::hausdorff(m, ctx.body->mesh()) <= 2.0 * voxel_diagonal);
  CHECK(m.signed_volume() > 0.0);
  CHECK_THROWS_AS(extract_mesh(p, ctx, ExtractionConfig{.grid_resolution = 128, .iso_level = 25.0, .space = Space::kObservation}),
                  InputError);
}

TEST_CASE("mesh writers") {
  const auto dir = oracle::temp_dir("meshexport");
  TriangleMesh tri;
  tri.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0.3)};
  tri.faces = {{0, 1, 2}};
  write_mesh(tri, dir / "t.obj", MeshFormat::kObj);
  std::ifstream f(dir / "t.obj");
  int v = 0, fc = 0;
  for (std::string line; std::getline(f, line);) {
    v += line.rfind("v ", 0) == 0;
    fc += line.rfind("f ", 0) == 0;
  }
  CHECK(v == 3);
  CHECK(fc == 1);

  TriangleMesh empty;
  write_mesh(empty, dir / "e.obj", MeshFormat::kObj);
  write_mesh(empty, dir / "e.ply", MeshFormat::kPly);
  CHECK(read_obj(dir / "e.obj").vertices.empty());
  CHECK(read_ply(dir / "e.ply").faces.empty());

  ExtractionConfig c;
  c.grid_resolution = 24;
  c.iso_level = 500.0;
  const TriangleMesh s = extract_mesh(sphere_density(0.6), c);
  write_mesh(s, dir / "s.ply", MeshFormat::kPly);
  write_mesh(s, dir / "s2.ply", MeshFormat::kPly);
  const TriangleMesh back = read_ply(dir / "s.ply");
  REQUIRE(back.vertices.size() == s.vertices.size());
  for (size_t i = 0; i < s.vertices.size(); ++i)
    for (int a = 0; a < 3; ++a) CHECK(back.vertices[i][a] == static_cast<float>(s.vertices[i][a]));
  CHECK(back.faces == s.faces);
  std::ifstream a(dir / "s.ply", std::ios::binary), b(dir / "s2.ply", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
}
