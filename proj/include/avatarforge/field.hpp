#pragma once

#include "avatarforge/bodymodel.hpp"
#include "avatarforge/deform.hpp"
#include "avatarforge/field_params.hpp"
#include "avatarforge/geoquery.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace avatarforge {

enum class Space : uint8_t { kCanonical = 0, kObservation = 1 };
const char* to_string(Space space);
Space space_from_string(const std::string& name);

// Everything a space contributes to field evaluation: the body supplying the
// density prior σ̄ and, for the observation space, the deformation back to
// the canonical A-pose.
struct SpaceContext {
  Space space = Space::kCanonical;
  std::shared_ptr<const PosedBody> body;
  std::shared_ptr<const SpatialIndex> index;
  std::shared_ptr<const DensityPrior> prior;         // null: σ̄ ≡ 0
  std::shared_ptr<const Deformation> deformation;    // observation only

  static SpaceContext canonical(const PosedBody& a_pose, double sharpness, bool prior_enabled = true);
  static SpaceContext observation(const PosedBody& a_pose, const PosedBody& observed, double sharpness,
                                  bool prior_enabled = true);

  double prior_density(const Vec3& x, Vec3* gradient = nullptr) const;
};

struct FieldSample {
  double sigma = 0.0;
  Vec4 color = Vec4::Zero();
  Vec3 normal = Vec3::Zero();
  double prior_sigma = 0.0;
  std::optional<Vec3> density_gradient;
};

// Space-dependent per-point work that does not depend on the trainable
// parameters: the prior and, in observation space, inverse skinning.
struct PreparedPoints {
  Points3 x;                       // query positions in the space
  Eigen::VectorXd prior;           // σ̄(x)
  Points3 prior_gradient;          // ∇σ̄(x)
  Points3 x_lbs;                   // canonical: x; observation: x_c^lbs
  std::vector<uint32_t> vertex;    // observation: nearest observed vertex

  Eigen::Index size() const { return x.cols(); }
};
PreparedPoints prepare_points(const SpaceContext& context, const Points3& x);
// Same, with a caller-supplied σ̄ and no prior gradient.
PreparedPoints prepare_points(const SpaceContext& context, const Points3& x, const Eigen::VectorXd& prior);

struct FieldOutputs {
  Eigen::VectorXd sigma;
  Latent color;
  Points3 normal;
};

// Records one batched forward pass so it can be differentiated.
class FieldTape {
 public:
  FieldOutputs forward(const FieldParams& params, const SpaceContext& context, const PreparedPoints& points);

  // Accumulates dL/dθ into `grad` for upstream gradients on the outputs.
  // Any upstream block may be empty (treated as zero).
  void backward(const Eigen::VectorXd& dsigma, const Latent& dcolor, const Points3& dnormal, FieldParams* grad) const;

  // Exact ∇_x σ (residual + prior) of the recorded points.
  Points3 density_gradient() const;

 private:
  const FieldParams* params_ = nullptr;
  const SpaceContext* context_ = nullptr;
  const PreparedPoints* points_ = nullptr;
  std::optional<GridEncoder> encoder_;
  Points3 x_hat_;                    // point fed to the main network
  Mlp::Cache main_cache_;
  Eigen::VectorXd pre_clamp_;        // raw density + σ̄
  // Observation-space non-rigid branch.
  Mlp::Cache nr_cache_;
  std::vector<Mat3> offset_jacobian_;
};

// Single-point conveniences.
FieldSample eval_canonical(const FieldParams& params, const SpaceContext& canonical, const Vec3& x_c, double prior_sigma);
FieldSample eval_observation(const FieldParams& params, const SpaceContext& observation, const Vec3& x_o,
                             double prior_sigma);
// Evaluates with σ̄ computed from the context's prior.
FieldSample eval_field(const FieldParams& params, const SpaceContext& context, const Vec3& x);

enum class GradientMode : uint8_t { kAnalytic, kFiniteDifference };
inline constexpr double kDensityGradientStep = 1e-3;
// ∇σ of the full density. Finite differences use central steps of 1e-3 and
// require the point to lie at least that far inside the scene box.
Vec3 density_gradient(const FieldParams& params, const SpaceContext& context, const Vec3& x, GradientMode mode);

// Batched ∇σ. Finite-difference mode falls back to the analytic value for
// points closer than the step to the box boundary.
Points3 density_gradients(const FieldParams& params, const SpaceContext& context, const PreparedPoints& points,
                          GradientMode mode);

// Background: frequency-encoded direction → latent.
void encode_direction(const Vec3& dir, double* out);
Vec4 background_feature(const FieldParams& params, const Vec3& direction);
// Batched: directions 3×N → 4×N, with optional backward.
struct BackgroundTape {
  Eigen::MatrixXd input;
  Mlp::Cache cache;
  Latent forward(const FieldParams& params, const Points3& directions);
  void backward(const FieldParams& params, const Latent& dlatent, FieldParams* grad) const;
};

bool inside_scene_box(const Vec3& x, double margin = 0.0);

}  // namespace avatarforge
