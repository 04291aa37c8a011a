#pragma once

#include "avatarforge/bodymodel.hpp"
#include "avatarforge/field_params.hpp"
#include "avatarforge/geoquery.hpp"

#include <memory>
#include <vector>

namespace avatarforge {

inline constexpr double kMaxNonrigidOffset = 0.1;

// Observation → canonical inverse skinning through the nearest observed
// vertex. For vertex v with A-pose transform G_A and observed transform G_o
// the map is x ↦ v_A + L_A·L_o⁻¹·(x − v_o): affine, sends v_o exactly onto
// v_A, and is the identity when both bodies coincide.
class Deformation {
 public:
  Deformation(const PosedBody& canonical, const PosedBody& observed, std::shared_ptr<const SpatialIndex> observed_index);

  struct Result {
    Vec3 x;           // x_c^lbs
    uint32_t vertex;  // nearest observed vertex
  };
  // Throws NumericError naming the vertex when its transform is singular.
  Result inverse_lbs(const Vec3& x_o) const;
  // Linear part of the map for a vertex (∂x_c^lbs/∂x_o).
  Mat3 linear(uint32_t vertex) const { return Mat3::Identity() + delta_[vertex]; }
  const SpatialIndex& index() const { return *index_; }
  size_t num_vertices() const { return delta_.size(); }

 private:
  std::shared_ptr<const SpatialIndex> index_;
  std::vector<Mat3> delta_;         // L_A·L_o⁻¹ − I
  std::vector<Vec3> shift_;         // v_A − v_o
  std::vector<Vec3> observed_;      // v_o
  std::vector<uint8_t> singular_;
};

// Bounded corrective offset 0.1·tanh(‖o‖)·o/‖o‖ of a raw MLP output o, with
// its Jacobian ∂offset/∂o (symmetric).
Vec3 bound_offset(const Vec3& raw, Mat3* jacobian = nullptr);

// MLP_{θ_NR}(γ(x_lbs)) after bounding.
Vec3 nonrigid_offset(const FieldParams& params, const Vec3& x_lbs);

// x̂_c = x_c^lbs + offset.
Vec3 deform_to_canonical(const FieldParams& params, const Deformation& deformation, const Vec3& x_o);

}  // namespace avatarforge
