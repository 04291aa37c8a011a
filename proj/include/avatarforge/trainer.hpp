#pragma once

#include "avatarforge/checkpoint.hpp"
#include "avatarforge/config.hpp"
#include "avatarforge/field.hpp"
#include "avatarforge/guidance.hpp"
#include "avatarforge/losses.hpp"
#include "avatarforge/optimizer.hpp"
#include "avatarforge/render.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace avatarforge {

// Canonical A-pose body, the configured observed body and their spaces.
struct Scene {
  PosedBody a_pose, observed;
  SpaceContext canonical, observation;

  const SpaceContext& context(Space space) const { return space == Space::kCanonical ? canonical : observation; }
};
// Body asset from config.asset (built-in when empty), posed per config.
Scene build_scene(const TrainConfig& config);

// Denoiser selected by config.denoiser. The mock target is a flat latent at
// the training resolution.
std::unique_ptr<Denoiser> make_denoiser(const TrainConfig& config);

// Dual-space optimization state: field parameters, Adam, step counter and
// the seeded rng streams (cameras, canonical space, observation space).
class Trainer {
 public:
  Trainer(const TrainConfig& config, std::shared_ptr<Denoiser> denoiser);

  // One iteration: a camera per supervised space, SDS through both renders,
  // normal loss over the union of their dense samples, one Adam update.
  LossReport step();

  int64_t current_step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const FieldParams& params() const { return params_; }
  const SpaceContext& context(Space space) const { return scene_->context(space); }
  const NoiseSchedule& schedule() const { return schedule_; }

  Checkpoint checkpoint() const;
  // Continues from a checkpoint of a run with the same config.
  void restore(const Checkpoint& checkpoint);

  // Deterministic full-body preview of one space (no jitter).
  LatentImage preview(Space space, int samples_per_ray = 64) const;

 private:
  TrainConfig config_;
  std::shared_ptr<Denoiser> denoiser_;
  NoiseSchedule schedule_;
  std::unique_ptr<const Scene> scene_;
  FieldParams params_;
  Adam adam_;
  int64_t step_ = 0;
  Rng camera_rng_, canonical_rng_, observation_rng_;
};

struct TrainOutputs {
  std::filesystem::path out_dir;
  bool write_previews = true;
  // Called after every step with the report.
  std::function<void(const LossReport&)> on_step;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<std::filesystem::path> previews;
  std::filesystem::path loss_csv;
};

// Runs until config.iterations. Writes loss.csv (appending when resuming),
// checkpoints/step_NNNNNN.avck every checkpoint_every steps and at the end,
// and previews/step_NNNNNN_<space>.png at step 0 and every preview_every
// steps. On a numeric failure the error names the last checkpoint written.
TrainResult train(Trainer& trainer, const TrainOutputs& outputs);

}  // namespace avatarforge
