#include "avatarforge/guidance.hpp"

#include <cmath>

namespace avatarforge {

NoiseSchedule::NoiseSchedule(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw InputError("noise schedule needs at least two steps");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) throw InputError("noise schedule betas out of range");
  betas_.resize(steps);
  alpha_bars_.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    betas_[t] = beta_start + (beta_end - beta_start) * t / (steps - 1);
    prod *= 1.0 - betas_[t];
    alpha_bars_[t] = prod;
  }
}

Latent add_noise(const Latent& x, const Latent& eps, double alpha_bar) {
  if (x.cols() != eps.cols()) throw InputError("add_noise: latent and noise shapes differ");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw InputError("add_noise: alpha_bar outside [0, 1]");
  return std::sqrt(alpha_bar) * x + std::sqrt(1.0 - alpha_bar) * eps;
}

std::unique_ptr<MockDenoiser> MockDenoiser::flat(double value, int width, int height) {
  return std::make_unique<MockDenoiser>(Latent::Constant(4, static_cast<Eigen::Index>(width) * height, value));
}

Latent MockDenoiser::predict_noise(const GuidanceRequest& request) {
  if (request.noisy.cols() != target_.cols())
    throw InputError("mock denoiser: request has " + std::to_string(request.noisy.cols()) + " pixels, target has " +
                     std::to_string(target_.cols()));
  const double a = request.alpha_bar;
  return (request.noisy - std::sqrt(a) * target_) / std::sqrt(1.0 - a);
}

Latent EchoDenoiser::predict_noise(const GuidanceRequest& request) {
  if (!request.noise) throw InputError("echo denoiser needs the injected noise");
  return *request.noise;
}

std::string view_prompt(const std::string& prompt, ViewTag view) {
  return prompt + ", " + to_string(view) + " view";
}

SdsResult sds_pixel_grad(Denoiser& denoiser, const NoiseSchedule& schedule, const Latent& x, int width, int height,
                         const SdsOptions& options, Rng& rng) {
  const int t = static_cast<int>(rng.uniform_int(schedule.t_min(), schedule.t_max()));
  Latent eps(4, x.cols());
  for (int c = 0; c < 4; ++c)
    for (Eigen::Index p = 0; p < x.cols(); ++p) eps(c, p) = rng.normal();
  return sds_pixel_grad(denoiser, schedule, x, width, height, options, t, eps);
}

SdsResult sds_pixel_grad(Denoiser& denoiser, const NoiseSchedule& schedule, const Latent& x, int width, int height,
                         const SdsOptions& options, int t, const Latent& eps) {
  if (x.cols() != static_cast<Eigen::Index>(width) * height) throw InputError("sds: latent does not match its size");
  if (!x.allFinite()) throw NumericError("sds: rendered latent has non-finite entries");
  GuidanceRequest req;
  req.alpha_bar = schedule.alpha_bar(t);
  req.noisy = add_noise(x, eps, req.alpha_bar);
  req.width = width;
  req.height = height;
  req.t = t;
  req.prompt = options.prompt;
  req.view = options.view;
  req.guidance_scale = options.guidance_scale;
  req.noise = &eps;
  const Latent eps_hat = denoiser.predict_noise(req);
  if (eps_hat.cols() != x.cols()) throw DenoiserError("denoiser reply shape differs from the request");
  if (!eps_hat.allFinite()) throw DenoiserError("denoiser returned non-finite noise");
  SdsResult r;
  r.t = t;
  r.weight = schedule.weight(t);
  r.gradient = r.weight * (eps_hat - eps);
  return r;
}

}  // namespace avatarforge
