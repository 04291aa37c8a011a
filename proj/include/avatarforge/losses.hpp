#pragma once

#include "avatarforge/field.hpp"
#include "avatarforge/field_params.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace avatarforge {

inline constexpr double kNormalLossDensityThreshold = 1e-3;

// One sample's b·‖∇σ − n‖² with b = |1 − e^{−σ}|, ∇σ held constant.
// Writes the partial derivatives with respect to σ and n.
double normal_term(double sigma, const Vec3& normal, const Vec3& density_gradient, double* dsigma, Vec3* dnormal);

struct NormalLoss {
  double value = 0.0;
  Eigen::VectorXd dsigma;  // ∂L_n/∂σ_i
  Points3 dnormal;         // ∂L_n/∂n_i
};
// Mean of normal_term over the batch. Throws InputError when a sample has
// no density gradient.
NormalLoss normal_consistency_loss(const std::vector<FieldSample>& samples);

struct LossWeights {
  double lambda_sds = 1.0;
  double lambda_n = 0.0005;
};

struct LossReport {
  int64_t step = 0;
  double sds_canonical = 0.0;    // ‖SDS pixel gradient‖ in canonical space
  double sds_observation = 0.0;  // same, observation space
  double normal_loss = 0.0;
  double total_weighted = 0.0;   // λ_SDS·(sds_c + sds_o) + λ_n·L_n
  double lambda_sds = 0.0;
  double lambda_n = 0.0;
  // Mean squared distance of each render to the guidance target, when known.
  double target_mse_canonical = -1.0;
  double target_mse_observation = -1.0;
  // Global parameter-gradient norm before clipping, and the clip factor.
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

// Combined parameter gradient λ_SDS·(g_c + g_o) + λ_n·∇L_n, summed canonical
// first. Throws NumericError naming the offending component on NaN/Inf.
FieldParams total_step_loss(const LossWeights& weights, const FieldParams& sds_canonical, const FieldParams& sds_observation,
                            const FieldParams& normal_gradient, double normal_loss, double sds_canonical_norm,
                            double sds_observation_norm, LossReport* report);

// Loss history CSV: step,sds_c_gradnorm,sds_o_gradnorm,normal_loss,total.
std::string loss_csv_header();
std::string loss_csv_row(const LossReport& report);

}  // namespace avatarforge
