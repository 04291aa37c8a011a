#include "avatarforge/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <fstream>

using namespace avatarforge;

namespace {

TrainConfig small_config(int64_t iterations) {
  TrainConfig c = config_from_json(R"({
    "render_resolution": 16, "samples_per_ray": 16, "rays_per_chunk": 8,
    "grid": {"levels": 8, "base_resolution": 4, "max_resolution": 64, "log2_table_size": 10},
    "observation_pose": {"preset": "rest"}, "seed": 5
  })");
  c.iterations = iterations;
  return c;
}

std::vector<double> flat(const FieldParams& p) {
  std::vector<double> out;
  p.for_each_tensor([&](const std::string&, const double* d, size_t n, const std::vector<uint64_t>&) {
    out.insert(out.end(), d, d + n);
  });
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

// Replies with an overflowing prediction.
class HugeDenoiser : public Denoiser {
 public:
  Latent predict_noise(const GuidanceRequest& r) override { return Latent::Constant(4, r.noisy.cols(), 1e300); }
  std::string name() const override { return "huge"; }
};

double preview_mse(const Trainer& t, const Latent& target) {
  double sum = 0.0;
  for (Space s : {Space::kCanonical, Space::kObservation})
    sum += (t.preview(s, 32).features - target).squaredNorm() / static_cast<double>(target.size());
  return sum / 2;
}

}  // namespace

TEST_CASE("echo denoiser without normal loss leaves parameters unchanged") {
  TrainConfig c = small_config(1);
  c.lambda_n = 0.0;
  Trainer t(c, std::make_shared<EchoDenoiser>());
  const std::vector<double> before = flat(t.params());
  const LossReport r = t.step();
  CHECK(flat(t.params()) == before);
  CHECK(r.sds_canonical == 0.0);
  CHECK(r.sds_observation == 0.0);
  CHECK(r.step == 1);
}

TEST_CASE("training is a pure function of config and seed") {
  const TrainConfig c = small_config(3);
  Trainer a(c, make_denoiser(c)), b(c, make_denoiser(c));
  for (int i = 0; i < 3; ++i) {
    const LossReport ra = a.step(), rb = b.step();
    CHECK(loss_csv_row(ra) == loss_csv_row(rb));
    CHECK(ra.sds_canonical > 0.0);
    CHECK(ra.sds_observation > 0.0);
  }
  CHECK(flat(a.params()) == flat(b.params()));

  TrainConfig other = c;
  other.seed = 6;
  Trainer d(other, make_denoiser(other));
  CHECK(loss_csv_row(d.step()) != loss_csv_row(Trainer(c, make_denoiser(c)).step()));
}

TEST_CASE("zero iterations checkpoint equals initialization") {
  const auto dir = oracle::temp_dir("train_zero");
  const TrainConfig c = small_config(0);
  Trainer t(c, make_denoiser(c));
  const TrainResult r = train(t, {dir, false, {}});
  REQUIRE(r.checkpoints.size() == 1);
  const Checkpoint ck = load_checkpoint(r.checkpoints[0]);
  CHECK(ck.step == 0);
  CHECK(flat(ck.params) == flat(FieldParams::initialize(c.grid, Rng::derive_seed(c.seed, 0))));
  CHECK(!ck.adam_m.has_value());
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run") {
  const auto straight_dir = oracle::temp_dir("train_straight");
  const auto resumed_dir = oracle::temp_dir("train_resumed");
  TrainConfig c = small_config(4);
  c.checkpoint_every = 2;
  c.preview_every = 2;

  Trainer straight(c, make_denoiser(c));
  const TrainResult full = train(straight, {straight_dir, true, {}});
  REQUIRE(full.checkpoints.size() == 2);
  CHECK(full.previews.size() == 6);

  TrainConfig first_half = c;
  first_half.iterations = 2;
  Trainer head(first_half, make_denoiser(first_half));
  const TrainResult half = train(head, {resumed_dir, false, {}});

  Trainer tail(c, make_denoiser(c));
  tail.restore(load_checkpoint(half.checkpoints.back()));
  CHECK(tail.current_step() == 2);
  const TrainResult rest = train(tail, {resumed_dir, false, {}});

  CHECK(flat(tail.params()) == flat(straight.params()));
  CHECK(slurp(resumed_dir / "loss.csv") == slurp(straight_dir / "loss.csv"));
  CHECK(slurp(rest.checkpoints.back()) == slurp(full.checkpoints.back()));
}

TEST_CASE("alternating mode supervises one space per step") {
  TrainConfig c = small_config(2);
  c.alternating = true;
  Trainer t(c, make_denoiser(c));
  const LossReport r0 = t.step();
  CHECK(r0.sds_canonical > 0.0);
  CHECK(r0.sds_observation == 0.0);
  const LossReport r1 = t.step();
  CHECK(r1.sds_canonical == 0.0);
  CHECK(r1.sds_observation > 0.0);
}

TEST_CASE("a numeric blow-up names the last good checkpoint") {
  const auto dir = oracle::temp_dir("train_nan");
  TrainConfig c = small_config(3);
  c.checkpoint_every = 1;
  c.lambda_n = 0.0;
  Trainer ok(c, make_denoiser(c));
  ok.step();
  save_checkpoint(ok.checkpoint(), dir / "warm.avck");

  Trainer t(c, std::make_shared<HugeDenoiser>());
  try {
    train(t, {dir, false, {}});
    FAIL("expected a NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("last good checkpoint") != std::string::npos);
  }
  CHECK(t.current_step() == 0);
}

TEST_CASE("16×16 mock run pulls renders toward the flat target") {
  TrainConfig c = small_config(200);
  c.samples_per_ray = 32;
  Trainer t(c, make_denoiser(c));
  const Latent target = Latent::Constant(4, 16 * 16, c.denoiser.target);
  const double before = preview_mse(t, target);
  for (int i = 0; i < 200; ++i) t.step();
  const double after = preview_mse(t, target);
  MESSAGE("preview MSE " << before << " -> " << after);
  CHECK(after <= 0.1 * before);
}
