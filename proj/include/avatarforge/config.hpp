#pragma once

#include "avatarforge/camera.hpp"
#include "avatarforge/encoder.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace avatarforge {

struct DenoiserConfig {
  std::string kind = "mock";  // mock | echo | remote
  double target = 0.25;       // mock: flat target latent value
  std::string url = "http://127.0.0.1:8765";
  int attempts = 3;
  int backoff_ms = 200;
};

struct TrainConfig {
  int64_t iterations = 10000;
  double lr = 1e-3;
  double lambda_n = 5e-4;
  double lambda_sds = 1.0;
  double clip_norm = 10.0;
  uint64_t seed = 0;
  std::string observation_pose = R"({"preset":"rest"})";  // pose JSON
  std::string prompt = "a 3D rendering of a person";
  double guidance_scale = 100.0;
  DenoiserConfig denoiser;
  int render_resolution = 64;
  int samples_per_ray = 64;
  int rays_per_chunk = 64;
  double prior_sharpness = 1e-3;
  GridConfig grid;
  CameraConfig camera;
  bool alternating = false;  // supervise one space per step, canonical first
  int64_t checkpoint_every = 500;
  int64_t preview_every = 100;
  int threads = 1;
  std::string asset;  // AVBM path; empty selects the built-in body

  // Throws InputError naming the offending field.
  void validate() const;
};

// Fills defaults for missing keys; unknown keys are rejected.
TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& config);
TrainConfig load_config(const std::filesystem::path& path);

// Applies "a.b.c=value" overrides to JSON text. The value is parsed as JSON
// when possible and taken as a string otherwise.
std::string apply_overrides(const std::string& json_text, const std::vector<std::string>& overrides);

}  // namespace avatarforge
