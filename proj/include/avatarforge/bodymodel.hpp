#pragma once

#include "avatarforge/common.hpp"
#include "avatarforge/mesh.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace avatarforge {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr int kSkinInfluences = 4;

// Parametric body in the SMPL layout. Vertex-major bases: row 3*v + axis.
struct BodyModelAsset {
  RowPoints template_vertices;            // V x 3, rest pose T̄
  std::vector<Face> faces;
  Eigen::MatrixXd joint_regressor;        // J x V
  Eigen::Matrix<double, Eigen::Dynamic, kSkinInfluences, Eigen::RowMajor> skin_weights;     // V x 4
  Eigen::Matrix<uint32_t, Eigen::Dynamic, kSkinInfluences, Eigen::RowMajor> skin_indices;   // V x 4
  Eigen::MatrixXd shape_basis;            // 3V x n_shape
  Eigen::MatrixXd pose_basis;             // 3V x 9(J-1)
  std::vector<int> parents;               // -1 marks the root
  RowPoints a_pose;                       // J x 3 axis-angle

  int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_shape() const { return static_cast<int>(shape_basis.cols()); }

  // Throws InputError naming the violated invariant.
  void validate() const;
  // Joints ordered so that every parent precedes its children.
  std::vector<int> topological_order() const;
};

struct PoseShapeParams {
  Eigen::VectorXd beta;       // n_shape
  RowPoints xi;               // J x 3 axis-angle per joint
  Vec3 global_translation = Vec3::Zero();

  static PoseShapeParams rest(const BodyModelAsset& asset);
  static PoseShapeParams a_pose(const BodyModelAsset& asset);
  void validate(const BodyModelAsset& asset) const;
};

struct PosedBody {
  RowPoints vertices;                  // posed, V x 3
  RowPoints shaped;                    // T_P(β, ξ) before skinning
  std::vector<Affine3> per_vertex_transform;
  RowPoints rest_joints;               // J(β)
  RowPoints joints;                    // posed joint positions
  std::vector<Affine3> joint_transforms;  // G_k
  std::vector<Face> faces;
  PoseShapeParams source;

  TriangleMesh mesh() const;
};

BodyModelAsset load_asset(const std::filesystem::path& path);
// Writes the AVBM container plus a "<path>.json" sidecar listing section shapes.
void save_asset(const BodyModelAsset& asset, const std::filesystem::path& path);

// Procedural 24-joint "capsule-person" in the SMPL layout, values rounded to
// f32 so that save/load reproduces it exactly.
BodyModelAsset make_capsule_person();
std::shared_ptr<const BodyModelAsset> builtin_asset();

// Pose features (R(ξ_j) − I) for the non-root joints, row-major, 9(J−1) long.
Eigen::VectorXd pose_features(const RowPoints& xi);
Mat3 rodrigues(const Vec3& axis_angle);

// T_P = T̄ + B_S(β; S) + B_P(ξ; P).
RowPoints shape_blend(const BodyModelAsset& asset, const PoseShapeParams& params);
// Regresses J(β), composes joint transforms down the tree and skins every
// vertex with G = Σ w_k G_k.
PosedBody pose_body(const BodyModelAsset& asset, const PoseShapeParams& params);
// The canonical-space body: 45° shoulder abduction, everything else at rest.
PosedBody canonical_a_pose(const BodyModelAsset& asset, const Eigen::VectorXd& beta = {});

// Loads {"preset": "a-pose"|"rest"} or {"beta": [...], "xi": [[x,y,z],...] | [..3J..],
// "translation": [x,y,z]} from JSON text.
PoseShapeParams pose_from_json(const BodyModelAsset& asset, const std::string& json_text);
std::string pose_to_json(const PoseShapeParams& params);

}  // namespace avatarforge
