#pragma once

#include "avatarforge/field_params.hpp"

#include <cstdint>

namespace avatarforge {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // global gradient norm; <= 0 disables clipping
};

// Adam over every FieldParams tensor with one shared learning rate.
class Adam {
 public:
  Adam() = default;
  Adam(const FieldParams& shape_like, AdamConfig config);

  struct StepInfo {
    double grad_norm = 0.0;  // before clipping
    double clip_scale = 1.0;
  };
  // Clips grad in place to the global norm, then updates params. Throws
  // NumericError, leaving params and moments untouched, when the gradient
  // or the updated parameters are not finite.
  StepInfo step(FieldParams* params, FieldParams* grad);

  const AdamConfig& config() const { return config_; }
  int64_t steps() const { return t_; }
  const FieldParams& first_moment() const { return m_; }
  const FieldParams& second_moment() const { return v_; }
  // Restores state from a checkpoint.
  void restore(FieldParams m, FieldParams v, int64_t steps);

 private:
  AdamConfig config_;
  FieldParams m_, v_;
  int64_t t_ = 0;
};

}  // namespace avatarforge
