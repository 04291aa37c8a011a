#include "avatarforge/meshexport.hpp"

#include "avatarforge/parallel.hpp"

namespace avatarforge {

void ExtractionConfig::validate() const {
  if (grid_resolution < 8) throw InputError("mesh extraction resolution must be at least 8");
  if (!(iso_level > 0.0)) throw InputError("iso level must be positive");
  if (threads < 1) throw InputError("threads must be positive");
}

TriangleMesh extract_mesh(const DensityFn& density, const ExtractionConfig& config) {
  config.validate();
  const int n = config.grid_resolution + 1;
  const double h = 2.0 / config.grid_resolution;
  ScalarGrid grid;
  grid.nx = grid.ny = grid.nz = n;
  grid.origin = Vec3::Constant(-1.0);
  grid.spacing = h;
  grid.values.resize(static_cast<size_t>(n) * n * n);
  const size_t slab = static_cast<size_t>(n) * n;
  parallel_for(n, config.threads, [&](int k) {
    Points3 x(3, static_cast<Eigen::Index>(slab));
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) x.col(static_cast<Eigen::Index>(j) * n + i) = grid.node(i, j, k);
    Eigen::Map<Eigen::VectorXd> out(grid.values.data() + k * slab, static_cast<Eigen::Index>(slab));
    density(x, out);
  });
  bool any = false;
  for (double v : grid.values) any |= v >= config.iso_level;
  if (!any) return {};
  return marching_cubes(grid, config.iso_level);
}

TriangleMesh extract_mesh(const FieldParams& params, const SpaceContext& context, const ExtractionConfig& config) {
  if (context.space != config.space) throw InputError("extraction space does not match the context");
  return extract_mesh(
      [&](const Points3& x, Eigen::Ref<Eigen::VectorXd> out) {
        constexpr Eigen::Index kBatch = 4096;
        for (Eigen::Index b = 0; b < x.cols(); b += kBatch) {
          const Eigen::Index m = std::min(kBatch, x.cols() - b);
          const PreparedPoints pts = prepare_points(context, x.middleCols(b, m));
          FieldTape tape;
          out.segment(b, m) = tape.forward(params, context, pts).sigma;
        }
      },
      config);
}

}  // namespace avatarforge
