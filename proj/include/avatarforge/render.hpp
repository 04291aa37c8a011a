#pragma once

#include "avatarforge/camera.hpp"
#include "avatarforge/field.hpp"
#include "avatarforge/field_params.hpp"
#include "avatarforge/losses.hpp"
#include "avatarforge/rng.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace avatarforge {

// H×W×4 latent image plus accumulated opacity. Pixel p = y·W + x, row 0 on
// top; features are stored one column per pixel.
struct LatentImage {
  int width = 0, height = 0;
  Space space = Space::kCanonical;
  Latent features;
  Eigen::VectorXd opacity;

  static LatentImage zeros(int width, int height, Space space);
  int pixels() const { return width * height; }
  Vec4 pixel(int x, int y) const { return features.col(y * width + x); }
};

struct RenderConfig {
  int samples_per_ray = 64;
  bool stratified = false;       // jitter within strata (needs an rng)
  bool background = true;
  double early_stop = 1e-6;      // stop marching once transmittance drops below
  int threads = 1;
  int rays_per_chunk = 64;
};

// Front-to-back compositing of one ray: W_i = T_i·α_i, α_i = 1 − e^{−σ_iΔ_i},
// C = Σ W_i c_i + T·c_bg with T the transmittance left after the last
// evaluated sample.
struct RayComposite {
  Vec4 color = Vec4::Zero();
  double opacity = 0.0;        // Σ W_i
  double transmittance = 1.0;  // T after the used samples
  int used = 0;                // samples consumed before early stop
};
// `weights`, when given, receives W_i for every sample (zero past an early stop).
RayComposite composite_ray(int n, const double* sigma, const double* delta, const double* colors, const Vec4& background,
                           double early_stop = 0.0, double* weights = nullptr);
// Gradients of g·C with respect to σ_i, c_i (4 per sample) and the background.
void composite_ray_backward(int n, const double* sigma, const double* delta, const double* colors, const Vec4& background,
                            const Vec4& g, double* dsigma, double* dcolors, Vec4* dbackground);

// Stratum boundaries and per-sample t, Δ for one ray segment [t0, t1].
void ray_samples(double t0, double t1, int n, const double* jitter, double* t, double* delta);

LatentImage render_rays(const FieldParams& params, const SpaceContext& context, const Camera& camera,
                        const RenderConfig& config, Rng* rng = nullptr);

// Opacity of the prior density σ̄ alone (the zero-initialized field).
Eigen::VectorXd render_silhouette(const SpaceContext& context, const Camera& camera, int samples_per_ray = 64,
                                  int threads = 1);

// Fixed number of gradient accumulation lanes; the reduction order does not
// depend on the thread count.
inline constexpr int kGradientLanes = 4;

// Normal-consistency term fused into a render's backward pass.
struct NormalLossTerm {
  double weight = 0.0;          // λ_n / N for the union batch of N samples
  double threshold = kNormalLossDensityThreshold;
  GradientMode mode = GradientMode::kAnalytic;
};

// A recorded render that can be differentiated. The forward pass keeps the
// field activations of every evaluated batch; the backward pass replays them
// and pushes pixel (and optional normal-loss) gradients into θ. Parameters
// must not change between the two passes.
class RenderTape {
 public:
  LatentImage forward(const FieldParams& params, const SpaceContext& context, const Camera& camera,
                      const RenderConfig& config, Rng* rng = nullptr);

  // Samples whose density exceeds the threshold (the normal-loss batch).
  size_t count_dense_samples(double threshold) const;
  size_t sample_count() const;

  struct Result {
    double normal_sum = 0.0;   // Σ b‖∇σ − n‖² over the dense samples
    size_t normal_count = 0;
  };
  // Accumulates pixel_scale·(∂⟨dpixel, C⟩/∂θ) + normal.weight·∂(Σ normal_term)/∂θ
  // into grad. dpixel may be empty when only the normal term is wanted.
  Result backward(const Latent& dpixel, double pixel_scale, const NormalLossTerm* normal, FieldParams* grad) const;

 private:
  // One marching round of field evaluations.
  struct Batch {
    PreparedPoints points;
    FieldTape tape;
    std::vector<int> sample;  // per column: kept sample id, or -1 past early stop
  };
  struct Chunk {
    std::vector<int> rays;                      // pixel ids
    std::vector<std::vector<int>> ray_samples;  // per ray: sample ids in depth order
    std::vector<std::unique_ptr<Batch>> batches;
    std::vector<std::pair<int, int>> origin;    // per sample: (batch, column)
    Eigen::VectorXd sigma, delta;
    Latent color;
    Points3 directions;
    Latent background;
  };
  friend LatentImage render_rays(const FieldParams&, const SpaceContext&, const Camera&, const RenderConfig&, Rng*);
  LatentImage run_forward(const FieldParams& params, const SpaceContext& context, const Camera& camera,
                          const RenderConfig& config, Rng* rng, bool keep);
  void forward_chunk(int chunk_id, const double* jitter, bool keep, LatentImage& image);
  void backward_chunk(const Chunk& chunk, const Latent& dpixel, double pixel_scale, const NormalLossTerm* normal,
                      FieldParams* grad, Result* result) const;

  const FieldParams* params_ = nullptr;
  const SpaceContext* context_ = nullptr;
  Camera camera_;
  RenderConfig config_;
  std::vector<Chunk> chunks_;
};

}  // namespace avatarforge
