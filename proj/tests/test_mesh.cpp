#include "avatarforge/mesh.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace avatarforge;

namespace {

ScalarGrid sphere_grid(int n, double radius) {
  const double h = 2.0 / n;
  return ScalarGrid::sample(n + 1, n + 1, n + 1, Vec3::Constant(-1.0), h,
                            [&](const Points3& p, Eigen::Ref<Eigen::VectorXd> out) {
                              for (Eigen::Index i = 0; i < p.cols(); ++i) out[i] = radius - p.col(i).norm();
                            });
}

}  // namespace

TEST_CASE("marching cubes sphere is closed, genus zero and outward") {
  const TriangleMesh m = marching_cubes(sphere_grid(48, 0.5), 0.0);
  REQUIRE_FALSE(m.empty());
  CHECK(m.is_closed());
  CHECK(m.euler_characteristic() == 2);
  const double v = m.signed_volume();
  CHECK(v > 0.0);
  CHECK(v == doctest::Approx(4.0 / 3.0 * std::numbers::pi * 0.125).epsilon(0.02));
  for (const auto& p : m.vertices) CHECK(std::abs(p.norm() - 0.5) < 2.0 / 48);
  // Every face normal points away from the center. Zero-area faces, where the
  // surface passes exactly through a grid node, have no orientation.
  int inward = 0, oriented = 0;
  for (const auto& f : m.faces) {
    const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
    if (n.norm() < 1e-12) continue;
    ++oriented;
    if (n.dot(m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) < 0) ++inward;
  }
  CHECK(oriented > static_cast<int>(m.faces.size()) * 9 / 10);
  CHECK(inward == 0);
}

TEST_CASE("marching cubes handles degenerate grids") {
  ScalarGrid g = sphere_grid(8, 0.5);
  CHECK(marching_cubes(g, 100.0).empty());
  CHECK(marching_cubes(g, -100.0).empty());
  ScalarGrid tiny;
  tiny.nx = 1;
  CHECK(marching_cubes(tiny, 0.0).empty());
}

TEST_CASE("marching cubes is deterministic") {
  const TriangleMesh a = marching_cubes(sphere_grid(20, 0.6), 0.0);
  const TriangleMesh b = marching_cubes(sphere_grid(20, 0.6), 0.0);
  CHECK(a.vertices == b.vertices);
  CHECK(a.faces == b.faces);
}

TEST_CASE("mesh topology helpers") {
  TriangleMesh cube = oracle::unit_cube();
  CHECK(cube.is_closed());
  CHECK(cube.euler_characteristic() == 2);
  CHECK(cube.signed_volume() == doctest::Approx(1.0));
  cube.flip_orientation();
  CHECK(cube.signed_volume() == doctest::Approx(-1.0));
  TriangleMesh open = cube;
  open.faces.pop_back();
  CHECK_FALSE(open.is_closed());
}

TEST_CASE("OBJ writer emits one line per element with 1-based faces") {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.faces = {{0, 1, 2}};
  const auto dir = oracle::temp_dir("obj");
  write_mesh(m, dir / "t.obj", MeshFormat::kObj);
  std::ifstream is(dir / "t.obj");
  std::string line;
  int v = 0, f = 0;
  while (std::getline(is, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) {
      ++f;
      CHECK(line == "f 1 2 3");
    }
  }
  CHECK(v == 3);
  CHECK(f == 1);
}

TEST_CASE("mesh files round trip to f32 precision and are bit stable") {
  const TriangleMesh m = marching_cubes(sphere_grid(12, 0.55), 0.0);
  const auto dir = oracle::temp_dir("roundtrip");
  for (auto fmt : {MeshFormat::kObj, MeshFormat::kPly}) {
    const auto path = dir / (fmt == MeshFormat::kObj ? "m.obj" : "m.ply");
    write_mesh(m, path, fmt);
    const TriangleMesh r = fmt == MeshFormat::kObj ? read_obj(path) : read_ply(path);
    REQUIRE(r.vertices.size() == m.vertices.size());
    CHECK(r.faces == m.faces);
    for (size_t i = 0; i < m.vertices.size(); ++i)
      for (int c = 0; c < 3; ++c) CHECK(r.vertices[i][c] == static_cast<float>(m.vertices[i][c]));
    std::ifstream a(path, std::ios::binary);
    std::stringstream first;
    first << a.rdbuf();
    write_mesh(m, path, fmt);
    std::ifstream b(path, std::ios::binary);
    std::stringstream second;
    second << b.rdbuf();
    CHECK(first.str() == second.str());
  }
}

TEST_CASE("empty meshes produce valid files") {
  const auto dir = oracle::temp_dir("empty");
  TriangleMesh empty;
  write_mesh(empty, dir / "e.obj", MeshFormat::kObj);
  write_mesh(empty, dir / "e.ply", MeshFormat::kPly);
  CHECK(read_obj(dir / "e.obj").vertices.empty());
  const TriangleMesh p = read_ply(dir / "e.ply");
  CHECK(p.vertices.empty());
  CHECK(p.faces.empty());
}
