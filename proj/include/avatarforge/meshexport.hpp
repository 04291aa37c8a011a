#pragma once

#include "avatarforge/field.hpp"
#include "avatarforge/field_params.hpp"
#include "avatarforge/mesh.hpp"

#include <functional>

namespace avatarforge {

struct ExtractionConfig {
  int grid_resolution = 128;  // cells per axis over [-1,1]³
  double iso_level = 25.0;
  Space space = Space::kCanonical;
  int threads = 1;

  void validate() const;
};

// Density callback: one value per column of the batch.
using DensityFn = std::function<void(const Points3&, Eigen::Ref<Eigen::VectorXd>)>;

// Samples σ on the (resolution+1)³ lattice over [-1,1]³ and extracts
// {σ ≥ iso} with normals along decreasing σ. Empty when no node reaches iso.
TriangleMesh extract_mesh(const DensityFn& density, const ExtractionConfig& config);
// σ of the full field (residual + prior) in the context's space.
TriangleMesh extract_mesh(const FieldParams& params, const SpaceContext& context, const ExtractionConfig& config);

}  // namespace avatarforge
