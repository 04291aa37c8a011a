#pragma once

#include "avatarforge/camera.hpp"
#include "avatarforge/common.hpp"
#include "avatarforge/rng.hpp"

#include <memory>
#include <string>
#include <vector>

namespace avatarforge {

// Discrete diffusion schedule with linearly spaced betas. Steps are indexed
// 0..T-1; ᾱ_t = Π_{s≤t} (1 − β_s).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int steps = 1000, double beta_start = 8.5e-4, double beta_end = 1.2e-2);

  int steps() const { return static_cast<int>(alpha_bars_.size()); }
  double beta(int t) const { return betas_.at(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(t); }
  // w(t) = 1 − ᾱ_t
  double weight(int t) const { return 1.0 - alpha_bar(t); }
  // Valid SDS range [0.02T, 0.98T].
  int t_min() const { return steps() / 50; }
  int t_max() const { return steps() - steps() / 50; }

 private:
  std::vector<double> betas_, alpha_bars_;
};

// x_t = √ᾱ·x + √(1−ᾱ)·ε
Latent add_noise(const Latent& x, const Latent& eps, double alpha_bar);

struct GuidanceRequest {
  Latent noisy;  // 4 × (H·W), pixel-major columns
  int width = 0, height = 0;
  int t = 0;
  double alpha_bar = 1.0;
  std::string prompt;
  ViewTag view = ViewTag::kFront;
  double guidance_scale = 100.0;
  // Injected noise; visible to in-process test doubles only, never sent.
  const Latent* noise = nullptr;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  // Predicted noise ε̂, same shape as request.noisy.
  virtual Latent predict_noise(const GuidanceRequest& request) = 0;
  virtual std::string name() const = 0;
};

// ε̂ = (x_t − √ᾱ·z*) / √(1−ᾱ): SDS pulls renders toward z*.
class MockDenoiser : public Denoiser {
 public:
  explicit MockDenoiser(Latent target) : target_(std::move(target)) {}
  // Flat target with every channel set to `value`.
  static std::unique_ptr<MockDenoiser> flat(double value, int width, int height);

  Latent predict_noise(const GuidanceRequest& request) override;
  std::string name() const override { return "mock"; }
  const Latent& target() const { return target_; }

 private:
  Latent target_;
};

// Perfect denoiser: returns the injected noise, so SDS gradients vanish.
class EchoDenoiser : public Denoiser {
 public:
  Latent predict_noise(const GuidanceRequest& request) override;
  std::string name() const override { return "echo"; }
};

// "<prompt>, <tag> view"
std::string view_prompt(const std::string& prompt, ViewTag view);

struct SdsResult {
  Latent gradient;  // w(t)·(ε̂ − ε), pixel-major like the render
  int t = 0;
  double weight = 0.0;
};

struct SdsOptions {
  std::string prompt;
  ViewTag view = ViewTag::kFront;
  double guidance_scale = 100.0;
};

// Samples t ~ U[t_min, t_max] and ε ~ N(0, I) from rng (t first, then ε in
// channel-major order) and returns the stop-gradient SDS pixel gradient.
SdsResult sds_pixel_grad(Denoiser& denoiser, const NoiseSchedule& schedule, const Latent& x, int width, int height,
                         const SdsOptions& options, Rng& rng);
// Same with t and ε supplied.
SdsResult sds_pixel_grad(Denoiser& denoiser, const NoiseSchedule& schedule, const Latent& x, int width, int height,
                         const SdsOptions& options, int t, const Latent& eps);

}  // namespace avatarforge
