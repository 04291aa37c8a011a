#include "avatarforge/binio.hpp"
#include "avatarforge/bodymodel.hpp"
#include "avatarforge/geoquery.hpp"
#include "avatarforge/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <fstream>

using namespace avatarforge;

namespace {

PoseShapeParams random_params(const BodyModelAsset& a, Rng& rng, double pose_scale = 0.6) {
  PoseShapeParams p = PoseShapeParams::rest(a);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta[i] = rng.uniform(-2, 2);
  for (Eigen::Index j = 0; j < p.xi.rows(); ++j)
    for (int c = 0; c < 3; ++c) p.xi(j, c) = rng.uniform(-pose_scale, pose_scale);
  p.global_translation = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
  return p;
}

// Three-joint chain whose joints coincide with vertices 0..2.
BodyModelAsset chain_asset() {
  BodyModelAsset a;
  a.template_vertices.resize(4, 3);
  a.template_vertices << 0, 0, 0, 0.2, 0, 0, 0.5, 0, 0, 0.6, 0, 0;
  a.faces = {{0, 1, 2}};
  a.joint_regressor = Eigen::MatrixXd::Zero(3, 4);
  for (int j = 0; j < 3; ++j) a.joint_regressor(j, j) = 1.0;
  a.skin_weights = decltype(a.skin_weights)::Zero(4, 4);
  a.skin_indices = decltype(a.skin_indices)::Zero(4, 4);
  const uint32_t owner[4] = {0, 1, 2, 2};
  for (int v = 0; v < 4; ++v) {
    a.skin_weights(v, 0) = 1.0;
    a.skin_indices(v, 0) = owner[v];
  }
  a.shape_basis = Eigen::MatrixXd::Zero(12, 10);
  a.pose_basis = Eigen::MatrixXd::Zero(12, 18);
  a.parents = {-1, 0, 1};
  a.a_pose = RowPoints::Zero(3, 3);
  return a;
}

}  // namespace

TEST_CASE("builtin capsule-person satisfies the asset invariants") {
  const auto a = builtin_asset();
  CHECK(a->num_joints() == 24);
  CHECK(a->num_shape() == 10);
  CHECK(a->num_vertices() > 1200);
  CHECK(a->num_vertices() < 4000);
  CHECK_NOTHROW(a->validate());
  for (int v = 0; v < a->num_vertices(); ++v) CHECK(std::abs(a->skin_weights.row(v).sum() - 1.0) <= 1e-6);
  TriangleMesh m;
  for (int v = 0; v < a->num_vertices(); ++v) m.vertices.emplace_back(a->template_vertices.row(v).transpose());
  m.faces = a->faces;
  CHECK(m.is_closed());
  CHECK(m.euler_characteristic() == 2);
  CHECK(m.signed_volume() > 0);
  const PosedBody ap = canonical_a_pose(*a);
  const auto box = ap.mesh().bounds();
  CHECK(box.sizes().y() == doctest::Approx(1.7).epsilon(1e-3));
  CHECK(box.min().minCoeff() > -1.0);
  CHECK(box.max().maxCoeff() < 1.0);
}

TEST_CASE("asset save and load round trip exactly") {
  const auto dir = oracle::temp_dir("asset");
  const auto a = builtin_asset();
  save_asset(*a, dir / "capsule.avbm");
  CHECK(std::filesystem::exists(dir / "capsule.avbm.json"));
  const BodyModelAsset b = load_asset(dir / "capsule.avbm");
  CHECK(b.template_vertices == a->template_vertices);
  CHECK(b.faces == a->faces);
  CHECK(b.joint_regressor == a->joint_regressor);
  CHECK(b.skin_weights == a->skin_weights);
  CHECK(b.skin_indices == a->skin_indices);
  CHECK(b.shape_basis == a->shape_basis);
  CHECK(b.pose_basis == a->pose_basis);
  CHECK(b.parents == a->parents);
  CHECK(b.a_pose == a->a_pose);
}

TEST_CASE("asset loader rejects invalid files") {
  const auto dir = oracle::temp_dir("asset_bad");
  CHECK_THROWS_WITH_AS(load_asset(dir / "missing.avbm"), doctest::Contains("file not found"), InputError);

  BodyModelAsset bad = *builtin_asset();
  bad.skin_weights.row(5) *= 0.9;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("weights not normalized"), InputError);

  BodyModelAsset cyclic = *builtin_asset();
  cyclic.parents[4] = 7;  // knee <- ankle <- knee
  CHECK_THROWS_WITH_AS(cyclic.validate(), doctest::Contains("skeleton not a tree"), InputError);
  BodyModelAsset two_roots = *builtin_asset();
  two_roots.parents[5] = -1;
  CHECK_THROWS_WITH_AS(two_roots.validate(), doctest::Contains("skeleton not a tree"), InputError);
  BodyModelAsset bad_face = *builtin_asset();
  bad_face.faces[0][1] = 1000000;
  CHECK_THROWS_AS(bad_face.validate(), InputError);

  // A weight row of 0.9 written to disk must be refused on load, not renormalized.
  save_asset(*builtin_asset(), dir / "ok.avbm");
  std::ifstream is(dir / "ok.avbm", std::ios::binary);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  TensorFile f = parse_tensor_file(bytes, "AVBM");
  for (auto& t : f.tensors)
    if (t.name == "skin_weights") {
      auto& w = std::get<std::vector<float>>(t.data);
      for (int k = 0; k < 4; ++k) w[k] *= 0.9f;
    }
  write_tensor_file(dir / "weights.avbm", f);
  CHECK_THROWS_WITH_AS(load_asset(dir / "weights.avbm"), doctest::Contains("weights not normalized"), InputError);

  bytes.resize(bytes.size() / 2);
  std::ofstream os(dir / "truncated.avbm", std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  os.close();
  CHECK_THROWS_WITH_AS(load_asset(dir / "truncated.avbm"), doctest::Contains("malformed section"), InputError);
}

TEST_CASE("shape blend identities") {
  const auto& a = *builtin_asset();
  PoseShapeParams p = PoseShapeParams::a_pose(a);
  CHECK(shape_blend(a, p) == a.template_vertices);
  p.beta[0] = 1.0;
  const RowPoints t = shape_blend(a, p);
  for (int v = 0; v < a.num_vertices(); ++v)
    for (int c = 0; c < 3; ++c) CHECK(t(v, c) == doctest::Approx(a.template_vertices(v, c) + a.shape_basis(3 * v + c, 0)).epsilon(1e-14));

  Rng rng(1);
  PoseShapeParams p1 = random_params(a, rng), p2 = random_params(a, rng), p12 = p1, rest = PoseShapeParams::rest(a);
  p2.xi = p1.xi;
  p12.beta = p1.beta + p2.beta;
  rest.xi = p1.xi;
  const RowPoints lin = shape_blend(a, p1) + shape_blend(a, p2) - shape_blend(a, rest);
  CHECK((shape_blend(a, p12) - lin).cwiseAbs().maxCoeff() < 1e-6);

  PoseShapeParams wrong = PoseShapeParams::rest(a);
  wrong.beta.resize(3);
  CHECK_THROWS_WITH_AS(shape_blend(a, wrong), doctest::Contains("dimension mismatch"), InputError);
  PoseShapeParams big = PoseShapeParams::rest(a);
  big.xi(3, 0) = 7.0;
  CHECK_THROWS_AS(pose_body(a, big), InputError);
}

TEST_CASE("pose_body matches the dense skinning oracle") {
  const auto& a = *builtin_asset();
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const PoseShapeParams p = random_params(a, rng);
    const PosedBody body = pose_body(a, p);
    const oracle::DenseLbs ref = oracle::dense_lbs(a, p.beta, p.xi, p.global_translation);
    double err = 0.0;
    for (int v = 0; v < a.num_vertices(); ++v) {
      err = std::max(err, (body.vertices.row(v) - ref.vertices.row(v)).cwiseAbs().maxCoeff());
      const Eigen::Matrix<double, 3, 4> g = ref.vertex_transforms[v].topRows<3>();
      err = std::max(err, (body.per_vertex_transform[v] - g).cwiseAbs().maxCoeff());
    }
    CHECK(err < 1e-6);
  }
}

TEST_CASE("per-vertex transforms reproduce posed vertices and are invertible") {
  const auto& a = *builtin_asset();
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const PosedBody body = pose_body(a, random_params(a, rng, 1.0));
    for (int v = 0; v < a.num_vertices(); ++v) {
      const Vec3 vo = apply(body.per_vertex_transform[v], body.shaped.row(v).transpose());
      CHECK((vo - body.vertices.row(v).transpose()).norm() < 1e-6);
      CHECK(body.per_vertex_transform[v].leftCols<3>().determinant() > 1e-8);
    }
  }
}

TEST_CASE("identity pose is the identity map") {
  const auto& a = *builtin_asset();
  const PosedBody body = pose_body(a, PoseShapeParams::rest(a));
  CHECK((body.vertices - a.template_vertices).cwiseAbs().maxCoeff() < 1e-6);
  for (const auto& g : body.per_vertex_transform) CHECK((g - Affine3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("elbow rotation moves a rigidly attached offset") {
  const BodyModelAsset a = chain_asset();
  PoseShapeParams p = PoseShapeParams::rest(a);
  p.xi(2, 2) = std::numbers::pi / 2;
  const PosedBody body = pose_body(a, p);
  const Vec3 rel = body.vertices.row(3).transpose() - body.joints.row(2).transpose();
  CHECK((rel - Vec3(0, 0.1, 0)).norm() < 1e-12);
  // Rotating the parent as well composes down the chain.
  p.xi(1, 2) = std::numbers::pi / 2;
  const PosedBody both = pose_body(a, p);
  CHECK((both.joints.row(2).transpose() - Vec3(0.2, 0.3, 0)).norm() < 1e-12);
  CHECK((both.vertices.row(3).transpose() - Vec3(0.1, 0.3, 0)).norm() < 1e-12);
}

TEST_CASE("root rotation is equivariant about the root joint") {
  const auto& a = *builtin_asset();
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    PoseShapeParams p = random_params(a, rng);
    p.global_translation.setZero();
    const PosedBody base = pose_body(a, p);
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Mat3 R = Eigen::AngleAxisd(rng.uniform(0.1, 2.0), axis).toRotationMatrix();
    PoseShapeParams q = p;
    const Eigen::AngleAxisd root(R * rodrigues(p.xi.row(0).transpose()));
    q.xi.row(0) = (root.angle() * root.axis()).transpose();
    const PosedBody turned = pose_body(a, q);
    const Vec3 j0 = base.joints.row(0).transpose();
    for (int v = 0; v < a.num_vertices(); ++v) {
      const Vec3 expect = j0 + R * (base.vertices.row(v).transpose() - j0);
      CHECK((turned.vertices.row(v).transpose() - expect).norm() < 1e-5);
    }
  }
}

TEST_CASE("canonical A-pose") {
  const auto& a = *builtin_asset();
  const PosedBody ap = canonical_a_pose(a);
  const PosedBody again = canonical_a_pose(a);
  CHECK(ap.vertices == again.vertices);
  // Arms abducted 45 degrees about the body's front axis.
  const Vec3 rest_arm = (ap.rest_joints.row(18) - ap.rest_joints.row(16)).transpose();
  const Vec3 posed_arm = (ap.joints.row(18) - ap.joints.row(16)).transpose();
  const Mat3 down = Eigen::AngleAxisd(-std::numbers::pi / 4, Vec3::UnitZ()).toRotationMatrix();
  CHECK((posed_arm - down * rest_arm).norm() < 1e-6);
  CHECK(posed_arm.y() < -0.1);
  for (auto [l, r] : {std::pair{16, 17}, {18, 19}, {20, 21}, {22, 23}, {13, 14}}) {
    const Vec3 jl = ap.joints.row(l).transpose(), jr = ap.joints.row(r).transpose();
    CHECK((jl - Vec3(-jr.x(), jr.y(), jr.z())).norm() < 1e-6);
  }
  for (auto [w, s] : {std::pair{20, 16}, {21, 17}}) CHECK(std::abs(ap.joints(w, 0)) > std::abs(ap.joints(s, 0)));
  // The whole surface mirrors onto itself.
  std::vector<Vec3> pts;
  for (int v = 0; v < a.num_vertices(); ++v) pts.emplace_back(ap.vertices.row(v).transpose());
  VertexKdTree tree(pts);
  double worst = 0.0;
  for (const auto& p : pts) worst = std::max(worst, tree.nearest(Vec3(-p.x(), p.y(), p.z())).second);
  CHECK(worst < 1e-6);
}

TEST_CASE("pose JSON round trip") {
  const auto& a = *builtin_asset();
  Rng rng(4);
  const PoseShapeParams p = random_params(a, rng);
  const PoseShapeParams q = pose_from_json(a, pose_to_json(p));
  CHECK(q.beta == p.beta);
  CHECK(q.xi == p.xi);
  CHECK(q.global_translation == p.global_translation);
  CHECK(pose_from_json(a, R"({"preset":"a-pose"})").xi == a.a_pose);
  CHECK_THROWS_AS(pose_from_json(a, "{"), InputError);
  CHECK_THROWS_AS(pose_from_json(a, R"({"xi":[1,2]})"), InputError);
}
