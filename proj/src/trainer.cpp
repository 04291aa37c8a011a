#include "avatarforge/trainer.hpp"

#include "avatarforge/image_io.hpp"
#include "avatarforge/remote_denoiser.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace avatarforge {

namespace {

std::shared_ptr<const BodyModelAsset> asset_for(const TrainConfig& c) {
  if (c.asset.empty()) return builtin_asset();
  return std::make_shared<const BodyModelAsset>(load_asset(c.asset));
}

RenderConfig render_config(const TrainConfig& c, bool stratified) {
  RenderConfig r;
  r.samples_per_ray = c.samples_per_ray;
  r.stratified = stratified;
  r.threads = c.threads;
  r.rays_per_chunk = c.rays_per_chunk;
  return r;
}

std::string step_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06lld", static_cast<long long>(step));
  return buf;
}

double mse_to(const Latent& x, const Latent& target) { return (x - target).squaredNorm() / static_cast<double>(x.size()); }

}  // namespace

Scene build_scene(const TrainConfig& c) {
  const auto asset = asset_for(c);
  Scene s;
  s.a_pose = canonical_a_pose(*asset);
  s.observed = pose_body(*asset, pose_from_json(*asset, c.observation_pose));
  s.canonical = SpaceContext::canonical(s.a_pose, c.prior_sharpness);
  s.observation = SpaceContext::observation(s.a_pose, s.observed, c.prior_sharpness);
  return s;
}

std::unique_ptr<Denoiser> make_denoiser(const TrainConfig& c) {
  if (c.denoiser.kind == "mock") return MockDenoiser::flat(c.denoiser.target, c.render_resolution, c.render_resolution);
  if (c.denoiser.kind == "echo") return std::make_unique<EchoDenoiser>();
  if (c.denoiser.kind == "remote") {
    RemoteConfig rc;
    rc.url = c.denoiser.url;
    rc.attempts = c.denoiser.attempts;
    rc.backoff = std::chrono::milliseconds(c.denoiser.backoff_ms);
    return std::make_unique<RemoteDenoiser>(rc);
  }
  throw InputError("unknown denoiser kind '" + c.denoiser.kind + "'");
}

Trainer::Trainer(const TrainConfig& config, std::shared_ptr<Denoiser> denoiser)
    : config_(config),
      denoiser_(std::move(denoiser)),
      camera_rng_(Rng::derive_seed(config.seed, 1)),
      canonical_rng_(Rng::derive_seed(config.seed, 2)),
      observation_rng_(Rng::derive_seed(config.seed, 3)) {
  config_.camera.resolution = config_.render_resolution;
  config_.validate();
  if (!denoiser_) throw InputError("trainer needs a denoiser");
  scene_ = std::make_unique<const Scene>(build_scene(config_));
  params_ = FieldParams::initialize(config_.grid, Rng::derive_seed(config_.seed, 0));
  AdamConfig ac;
  ac.lr = config_.lr;
  ac.clip_norm = config_.clip_norm;
  adam_ = Adam(params_, ac);
}

LossReport Trainer::step() {
  const int64_t k = step_;
  const bool do_c = !config_.alternating || k % 2 == 0;
  const bool do_o = !config_.alternating || k % 2 == 1;
  const RenderConfig rc = render_config(config_, true);
  const int res = config_.render_resolution;
  const auto* mock = dynamic_cast<const MockDenoiser*>(denoiser_.get());

  struct Pass {
    Space space;
    RenderTape tape;
    SdsResult sds;
    double mse = -1.0;
  };
  std::vector<std::unique_ptr<Pass>> passes;
  size_t dense = 0;
  for (Space s : {Space::kCanonical, Space::kObservation}) {
    if (!(s == Space::kCanonical ? do_c : do_o)) continue;
    auto pass = std::make_unique<Pass>();
    pass->space = s;
    Rng& rng = s == Space::kCanonical ? canonical_rng_ : observation_rng_;
    const Camera cam = sample_camera(camera_rng_, config_.camera);
    const LatentImage img = pass->tape.forward(params_, context(s), cam, rc, &rng);
    SdsOptions opt;
    opt.prompt = config_.prompt;
    opt.view = cam.tag;
    opt.guidance_scale = config_.guidance_scale;
    pass->sds = sds_pixel_grad(*denoiser_, schedule_, img.features, res, res, opt, rng);
    if (mock) pass->mse = mse_to(img.features, mock->target());
    dense += pass->tape.count_dense_samples(kNormalLossDensityThreshold);
    passes.push_back(std::move(pass));
  }

  NormalLossTerm normal;
  normal.weight = dense > 0 ? config_.lambda_n / static_cast<double>(dense) : 0.0;
  FieldParams grad = params_.zeros_like();
  LossReport report;
  report.lambda_sds = config_.lambda_sds;
  report.lambda_n = config_.lambda_n;
  double normal_sum = 0.0;
  for (const auto& pass : passes) {
    FieldParams g = params_.zeros_like();
    const RenderTape::Result r = pass->tape.backward(pass->sds.gradient, config_.lambda_sds, &normal, &g);
    normal_sum += r.normal_sum;
    grad.add_scaled(g, 1.0);
    const double norm = pass->sds.gradient.norm();
    if (pass->space == Space::kCanonical) {
      report.sds_canonical = norm;
      report.target_mse_canonical = pass->mse;
    } else {
      report.sds_observation = norm;
      report.target_mse_observation = pass->mse;
    }
  }
  passes.clear();
  report.normal_loss = dense > 0 ? normal_sum / static_cast<double>(dense) : 0.0;
  report.total_weighted =
      config_.lambda_sds * (report.sds_canonical + report.sds_observation) + config_.lambda_n * report.normal_loss;
  if (!std::isfinite(report.total_weighted)) throw NumericError("non-finite loss at step " + std::to_string(k + 1));
  const Adam::StepInfo info = adam_.step(&params_, &grad);
  report.grad_norm = info.grad_norm;
  report.clip_scale = info.clip_scale;
  step_ = k + 1;
  report.step = step_;
  return report;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.step = step_;
  ck.params = params_;
  if (adam_.steps() > 0) {
    ck.adam_m = adam_.first_moment();
    ck.adam_v = adam_.second_moment();
  }
  ck.adam_steps = adam_.steps();
  ck.config_json = config_to_json(config_);
  ck.rng_states = {{"camera", camera_rng_.state()},
                   {"canonical", canonical_rng_.state()},
                   {"observation", observation_rng_.state()}};
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (!ck.params.same_shape(params_)) throw InputError("checkpoint parameters do not match the configured field");
  for (const char* key : {"camera", "canonical", "observation"})
    if (!ck.rng_states.count(key)) throw InputError(std::string("checkpoint lacks the '") + key + "' rng stream");
  params_ = ck.params;
  if (ck.adam_m)
    adam_.restore(*ck.adam_m, *ck.adam_v, ck.adam_steps);
  else
    adam_.restore(params_.zeros_like(), params_.zeros_like(), ck.adam_steps);
  step_ = ck.step;
  camera_rng_.set_state(ck.rng_states.at("camera"));
  canonical_rng_.set_state(ck.rng_states.at("canonical"));
  observation_rng_.set_state(ck.rng_states.at("observation"));
}

LatentImage Trainer::preview(Space space, int samples_per_ray) const {
  RenderConfig rc = render_config(config_, false);
  rc.samples_per_ray = samples_per_ray;
  const int res = config_.render_resolution;
  return render_rays(params_, context(space), Camera::preview(res, res), rc);
}

TrainResult train(Trainer& trainer, const TrainOutputs& out) {
  namespace fs = std::filesystem;
  TrainResult result;
  const TrainConfig& cfg = trainer.config();
  fs::create_directories(out.out_dir / "checkpoints");
  if (out.write_previews) fs::create_directories(out.out_dir / "previews");
  result.loss_csv = out.out_dir / "loss.csv";
  const bool resume = trainer.current_step() > 0 && fs::exists(result.loss_csv);
  std::ofstream csv(result.loss_csv, resume ? std::ios::app : std::ios::trunc);
  if (!csv) throw Error("cannot write " + result.loss_csv.string());
  if (!resume) csv << loss_csv_header();

  auto write_previews = [&] {
    if (!out.write_previews) return;
    for (Space s : {Space::kCanonical, Space::kObservation}) {
      const LatentImage img = trainer.preview(s);
      const fs::path p = out.out_dir / "previews" / (step_name(trainer.current_step()) + "_" + to_string(s) + ".png");
      write_png(p, upscale(mock_decode(img), 4));
      result.previews.push_back(p);
    }
  };
  auto save = [&] {
    const fs::path p = out.out_dir / "checkpoints" / (step_name(trainer.current_step()) + ".avck");
    save_checkpoint(trainer.checkpoint(), p);
    result.checkpoints.push_back(p);
  };

  if (trainer.current_step() == 0) write_previews();
  while (trainer.current_step() < cfg.iterations) {
    LossReport report;
    try {
      report = trainer.step();
    } catch (const NumericError& e) {
      const std::string last = result.checkpoints.empty() ? "none (initialization)" : result.checkpoints.back().string();
      throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last);
    }
    csv << loss_csv_row(report);
    csv.flush();
    if (out.on_step) out.on_step(report);
    const int64_t s = trainer.current_step();
    if (s % cfg.preview_every == 0) write_previews();
    if (s % cfg.checkpoint_every == 0 || s == cfg.iterations) save();
  }
  if (result.checkpoints.empty()) save();
  result.final_checkpoint = trainer.checkpoint();
  return result;
}

}  // namespace avatarforge
