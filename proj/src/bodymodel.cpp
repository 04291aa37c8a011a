#include "avatarforge/bodymodel.hpp"

#include "avatarforge/binio.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace avatarforge {

namespace {

constexpr uint32_t kAssetVersion = 1;
constexpr uint32_t kNoParent = 0xFFFFFFFFu;

template <typename Derived>
Tensor f32_tensor(const std::string& name, std::vector<uint64_t> shape, const Eigen::MatrixBase<Derived>& m) {
  // Row-major flattening regardless of the source storage order.
  std::vector<float> data;
  data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(static_cast<float>(m(r, c)));
  return {name, std::move(shape), std::move(data)};
}

void expect_shape(const Tensor& t, const std::vector<uint64_t>& shape) {
  if (t.shape != shape) {
    std::string got, want;
    for (auto d : t.shape) got += std::to_string(d) + " ";
    for (auto d : shape) want += std::to_string(d) + " ";
    throw InputError("malformed section: '" + t.name + "' has shape [ " + got + "], expected [ " + want + "]");
  }
}

Eigen::MatrixXd read_matrix(const Tensor& t, Eigen::Index rows, Eigen::Index cols) {
  const auto values = t.as_f64();
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<size_t>(r * cols + c)];
  return m;
}

bool finite_matrix(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// Asset invariants

void BodyModelAsset::validate() const {
  const int V = num_vertices();
  const int J = num_joints();
  if (V == 0) throw InputError("asset has no vertices");
  if (J == 0) throw InputError("skeleton not a tree: no joints");
  for (const auto& f : faces)
    for (auto v : f)
      if (v >= static_cast<uint32_t>(V)) throw InputError("face references a missing vertex");

  if (joint_regressor.rows() != J || joint_regressor.cols() != V)
    throw InputError("malformed section: joint_regressor must be J x V");
  if (skin_weights.rows() != V || skin_indices.rows() != V)
    throw InputError("malformed section: skin weights must have one row per vertex");
  if (shape_basis.rows() != 3 * V) throw InputError("malformed section: shape_basis must have 3V rows");
  if (pose_basis.rows() != 3 * V || pose_basis.cols() != 9 * (J - 1))
    throw InputError("malformed section: pose_basis must be 3V x 9(J-1)");
  if (a_pose.rows() != J) throw InputError("malformed section: a_pose must have one row per joint");
  if (!template_vertices.allFinite() || !finite_matrix(joint_regressor) || !finite_matrix(shape_basis) ||
      !finite_matrix(pose_basis) || !a_pose.allFinite() || !skin_weights.allFinite())
    throw InputError("malformed section: non-finite values");

  for (int v = 0; v < V; ++v) {
    double sum = 0.0;
    for (int k = 0; k < kSkinInfluences; ++k) {
      if (skin_weights(v, k) < 0.0) throw InputError("weights not normalized: negative weight at vertex " + std::to_string(v));
      if (skin_indices(v, k) >= static_cast<uint32_t>(J))
        throw InputError("malformed section: skin index out of range at vertex " + std::to_string(v));
      sum += skin_weights(v, k);
    }
    if (std::abs(sum - 1.0) > 1e-6) throw InputError("weights not normalized: vertex " + std::to_string(v));
  }
  topological_order();
}

std::vector<int> BodyModelAsset::topological_order() const {
  const int J = num_joints();
  int roots = 0;
  std::vector<std::vector<int>> children(J);
  for (int j = 0; j < J; ++j) {
    const int p = parents[j];
    if (p == -1) {
      ++roots;
    } else if (p < 0 || p >= J || p == j) {
      throw InputError("skeleton not a tree: bad parent of joint " + std::to_string(j));
    } else {
      children[p].push_back(j);
    }
  }
  if (roots != 1 || parents[0] != -1) throw InputError("skeleton not a tree: joint 0 must be the only root");
  std::vector<int> order{0};
  for (size_t i = 0; i < order.size(); ++i)
    for (int c : children[order[i]]) order.push_back(c);
  // Joints on a cycle are never reached from the root.
  if (static_cast<int>(order.size()) != J) throw InputError("skeleton not a tree: cycle in parent array");
  return order;
}

// ---------------------------------------------------------------------------
// Parameters

PoseShapeParams PoseShapeParams::rest(const BodyModelAsset& asset) {
  PoseShapeParams p;
  p.beta = Eigen::VectorXd::Zero(asset.num_shape());
  p.xi = RowPoints::Zero(asset.num_joints(), 3);
  return p;
}

PoseShapeParams PoseShapeParams::a_pose(const BodyModelAsset& asset) {
  PoseShapeParams p = rest(asset);
  p.xi = asset.a_pose;
  return p;
}

void PoseShapeParams::validate(const BodyModelAsset& asset) const {
  if (beta.size() != asset.num_shape())
    throw InputError("dimension mismatch: beta has " + std::to_string(beta.size()) + " entries, asset expects " +
                     std::to_string(asset.num_shape()));
  if (xi.rows() != asset.num_joints())
    throw InputError("dimension mismatch: xi has " + std::to_string(xi.rows()) + " joints, asset expects " +
                     std::to_string(asset.num_joints()));
  if (!beta.allFinite() || !xi.allFinite() || !global_translation.allFinite())
    throw InputError("pose/shape parameters must be finite");
  for (Eigen::Index j = 0; j < xi.rows(); ++j)
    if (xi.row(j).norm() >= 2.0 * std::numbers::pi)
      throw InputError("axis-angle magnitude of joint " + std::to_string(j) + " must be below 2*pi");
}

// ---------------------------------------------------------------------------
// Kinematics

Mat3 rodrigues(const Vec3& w) {
  const double theta = w.norm();
  Mat3 K;
  K << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  double a, b;
  if (theta < 1e-8) {
    // Series of sin(θ)/θ and (1 − cos θ)/θ².
    a = 1.0 - theta * theta / 6.0;
    b = 0.5 - theta * theta / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * K + b * K * K;
}

Eigen::VectorXd pose_features(const RowPoints& xi) {
  const Eigen::Index J = xi.rows();
  Eigen::VectorXd f(9 * std::max<Eigen::Index>(J - 1, 0));
  for (Eigen::Index j = 1; j < J; ++j) {
    const Mat3 d = rodrigues(xi.row(j).transpose()) - Mat3::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f[9 * (j - 1) + 3 * r + c] = d(r, c);
  }
  return f;
}

namespace {

// T̄ + S·β as a V x 3 row matrix.
RowPoints shaped_rest(const BodyModelAsset& asset, const Eigen::VectorXd& beta) {
  RowPoints out = asset.template_vertices;
  if (beta.size() > 0) {
    const Eigen::VectorXd d = asset.shape_basis * beta;
    out += Eigen::Map<const RowPoints>(d.data(), asset.num_vertices(), 3);
  }
  return out;
}

}  // namespace

RowPoints shape_blend(const BodyModelAsset& asset, const PoseShapeParams& params) {
  params.validate(asset);
  RowPoints out = shaped_rest(asset, params.beta);
  if (asset.num_joints() > 1) {
    const Eigen::VectorXd d = asset.pose_basis * pose_features(params.xi);
    out += Eigen::Map<const RowPoints>(d.data(), asset.num_vertices(), 3);
  }
  return out;
}

PosedBody pose_body(const BodyModelAsset& asset, const PoseShapeParams& params) {
  PosedBody body;
  body.shaped = shape_blend(asset, params);
  body.source = params;
  body.faces = asset.faces;

  const int J = asset.num_joints();
  const int V = asset.num_vertices();
  body.rest_joints = asset.joint_regressor * shaped_rest(asset, params.beta);

  // World rotation and translation of each joint frame.
  std::vector<Mat3> rot(J);
  std::vector<Vec3> pos(J);
  for (int j : asset.topological_order()) {
    const Mat3 local = rodrigues(params.xi.row(j).transpose());
    const Vec3 rest = body.rest_joints.row(j).transpose();
    const int p = asset.parents[j];
    if (p < 0) {
      rot[j] = local;
      pos[j] = rest;
    } else {
      rot[j] = rot[p] * local;
      pos[j] = pos[p] + rot[p] * (rest - body.rest_joints.row(p).transpose());
    }
  }

  body.joints.resize(J, 3);
  body.joint_transforms.resize(J);
  for (int j = 0; j < J; ++j) {
    Affine3 g;
    g.leftCols<3>() = rot[j];
    // G_k = A_k · [I, −j_k]: removes the rest joint position before rotating.
    g.col(3) = pos[j] - rot[j] * body.rest_joints.row(j).transpose() + params.global_translation;
    body.joint_transforms[j] = g;
    body.joints.row(j) = (pos[j] + params.global_translation).transpose();
  }

  body.vertices.resize(V, 3);
  body.per_vertex_transform.resize(V);
  for (int v = 0; v < V; ++v) {
    Affine3 g = Affine3::Zero();
    for (int k = 0; k < kSkinInfluences; ++k) {
      const double w = asset.skin_weights(v, k);
      if (w != 0.0) g += w * body.joint_transforms[asset.skin_indices(v, k)];
    }
    body.per_vertex_transform[v] = g;
    body.vertices.row(v) = apply(g, body.shaped.row(v).transpose()).transpose();
  }
  return body;
}

PosedBody canonical_a_pose(const BodyModelAsset& asset, const Eigen::VectorXd& beta) {
  PoseShapeParams p = PoseShapeParams::a_pose(asset);
  if (beta.size() > 0) p.beta = beta;
  return pose_body(asset, p);
}

TriangleMesh PosedBody::mesh() const {
  TriangleMesh m;
  m.vertices.reserve(vertices.rows());
  for (Eigen::Index v = 0; v < vertices.rows(); ++v) m.vertices.emplace_back(vertices.row(v).transpose());
  m.faces = faces;
  return m;
}

// ---------------------------------------------------------------------------
// File format

BodyModelAsset load_asset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("file not found: " + path.string());
  const TensorFile file = read_tensor_file(path, "AVBM");
  if (file.version != kAssetVersion) throw InputError("malformed section: unsupported AVBM version");

  const Tensor& verts = file.get("vertices");
  if (verts.shape.size() != 2 || verts.shape[1] != 3) throw InputError("malformed section: vertices must be [V,3]");
  const auto V = static_cast<Eigen::Index>(verts.shape[0]);
  const Tensor& parents = file.get("parents");
  if (parents.shape.size() != 1) throw InputError("malformed section: parents must be [J]");
  const auto J = static_cast<Eigen::Index>(parents.shape[0]);
  const Tensor& shape = file.get("shape_basis");
  if (shape.shape.size() != 3) throw InputError("malformed section: shape_basis must be [V,3,n_shape]");
  const auto S = static_cast<Eigen::Index>(shape.shape[2]);
  const Tensor& faces = file.get("faces");
  if (faces.shape.size() != 2 || faces.shape[1] != 3) throw InputError("malformed section: faces must be [F,3]");

  expect_shape(file.get("joint_regressor"), {uint64_t(J), uint64_t(V)});
  expect_shape(file.get("skin_weights"), {uint64_t(V), 4});
  expect_shape(file.get("skin_indices"), {uint64_t(V), 4});
  expect_shape(shape, {uint64_t(V), 3, uint64_t(S)});
  expect_shape(file.get("pose_basis"), {uint64_t(V), 3, uint64_t(9 * (J - 1))});
  expect_shape(file.get("a_pose"), {uint64_t(J), 3});

  BodyModelAsset a;
  a.template_vertices = read_matrix(verts, V, 3);
  const auto f = faces.as_u32();
  a.faces.resize(f.size() / 3);
  for (size_t i = 0; i < a.faces.size(); ++i) a.faces[i] = {f[3 * i], f[3 * i + 1], f[3 * i + 2]};
  a.joint_regressor = read_matrix(file.get("joint_regressor"), J, V);
  a.skin_weights = read_matrix(file.get("skin_weights"), V, 4);
  const auto idx = file.get("skin_indices").as_u32();
  a.skin_indices.resize(V, 4);
  for (Eigen::Index v = 0; v < V; ++v)
    for (int k = 0; k < 4; ++k) a.skin_indices(v, k) = idx[static_cast<size_t>(4 * v + k)];
  a.shape_basis = read_matrix(shape, 3 * V, S);
  a.pose_basis = read_matrix(file.get("pose_basis"), 3 * V, 9 * (J - 1));
  for (auto p : parents.as_u32()) a.parents.push_back(p == kNoParent ? -1 : static_cast<int>(p));
  a.a_pose = read_matrix(file.get("a_pose"), J, 3);
  a.validate();
  return a;
}

void save_asset(const BodyModelAsset& a, const std::filesystem::path& path) {
  a.validate();
  const auto V = static_cast<uint64_t>(a.num_vertices());
  const auto J = static_cast<uint64_t>(a.num_joints());
  const auto S = static_cast<uint64_t>(a.num_shape());

  TensorFile file;
  file.magic = "AVBM";
  file.version = kAssetVersion;
  file.metadata = R"({"generator":"avatarforge"})";
  file.tensors.push_back(f32_tensor("vertices", {V, 3}, a.template_vertices));
  std::vector<uint32_t> faces;
  for (const auto& f : a.faces) faces.insert(faces.end(), f.begin(), f.end());
  file.tensors.push_back({"faces", {a.faces.size(), 3}, std::move(faces)});
  file.tensors.push_back(f32_tensor("joint_regressor", {J, V}, a.joint_regressor));
  file.tensors.push_back(f32_tensor("skin_weights", {V, 4}, a.skin_weights));
  std::vector<uint32_t> idx;
  for (Eigen::Index v = 0; v < a.skin_indices.rows(); ++v)
    for (int k = 0; k < 4; ++k) idx.push_back(a.skin_indices(v, k));
  file.tensors.push_back({"skin_indices", {V, 4}, std::move(idx)});
  file.tensors.push_back(f32_tensor("shape_basis", {V, 3, S}, a.shape_basis));
  file.tensors.push_back(f32_tensor("pose_basis", {V, 3, 9 * (J - 1)}, a.pose_basis));
  std::vector<uint32_t> parents;
  for (int p : a.parents) parents.push_back(p < 0 ? kNoParent : static_cast<uint32_t>(p));
  file.tensors.push_back({"parents", {J}, std::move(parents)});
  file.tensors.push_back(f32_tensor("a_pose", {J, 3}, a.a_pose));
  write_tensor_file(path, file);

  nlohmann::ordered_json sidecar;
  sidecar["magic"] = file.magic;
  sidecar["version"] = file.version;
  for (const auto& t : file.tensors)
    sidecar["sections"][t.name] = {{"dtype", t.dtype() == DType::kU32 ? "u32" : "f32"}, {"shape", t.shape}};
  std::ofstream os(path.string() + ".json");
  os << sidecar.dump(2) << "\n";
  if (!os) throw Error("write failed: " + path.string() + ".json");
}

// ---------------------------------------------------------------------------
// JSON pose files

PoseShapeParams pose_from_json(const BodyModelAsset& asset, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pose JSON: ") + e.what());
  }
  if (!j.is_object()) throw InputError("malformed pose JSON: expected an object");
  PoseShapeParams p = PoseShapeParams::rest(asset);
  try {
    if (j.contains("preset")) {
      const auto preset = j["preset"].get<std::string>();
      if (preset == "a-pose")
        p.xi = asset.a_pose;
      else if (preset != "rest")
        throw InputError("unknown pose preset: " + preset);
    }
    if (j.contains("beta")) {
      const auto beta = j["beta"].get<std::vector<double>>();
      if (static_cast<int>(beta.size()) > asset.num_shape()) throw InputError("dimension mismatch: too many beta entries");
      for (size_t i = 0; i < beta.size(); ++i) p.beta[static_cast<Eigen::Index>(i)] = beta[i];
    }
    if (j.contains("xi")) {
      const auto& xi = j["xi"];
      std::vector<double> flat;
      for (const auto& e : xi) {
        if (e.is_array())
          for (const auto& c : e) flat.push_back(c.get<double>());
        else
          flat.push_back(e.get<double>());
      }
      if (flat.size() != static_cast<size_t>(3 * asset.num_joints()))
        throw InputError("dimension mismatch: xi must hold 3 values per joint");
      for (int r = 0; r < asset.num_joints(); ++r)
        for (int c = 0; c < 3; ++c) p.xi(r, c) = flat[static_cast<size_t>(3 * r + c)];
    }
    if (j.contains("translation")) {
      const auto t = j["translation"].get<std::vector<double>>();
      if (t.size() != 3) throw InputError("dimension mismatch: translation must have 3 entries");
      p.global_translation = Vec3(t[0], t[1], t[2]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed pose JSON: ") + e.what());
  }
  p.validate(asset);
  return p;
}

std::string pose_to_json(const PoseShapeParams& params) {
  nlohmann::ordered_json j;
  j["beta"] = std::vector<double>(params.beta.data(), params.beta.data() + params.beta.size());
  nlohmann::json xi = nlohmann::json::array();
  for (Eigen::Index r = 0; r < params.xi.rows(); ++r) xi.push_back({params.xi(r, 0), params.xi(r, 1), params.xi(r, 2)});
  j["xi"] = xi;
  j["translation"] = {params.global_translation.x(), params.global_translation.y(), params.global_translation.z()};
  return j.dump(2);
}

}  // namespace avatarforge
