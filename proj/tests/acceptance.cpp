// Acceptance report: one PASS/FAIL line per criterion, each evaluated at its
// stated tolerance and runtime budget.

#include "avatarforge/deform.hpp"
#include "avatarforge/geoquery.hpp"
#include "avatarforge/guidance.hpp"
#include "avatarforge/losses.hpp"
#include "avatarforge/meshexport.hpp"
#include "avatarforge/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace avatarforge;
using namespace fixture;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

// Worst relative error of analytic vs central-difference parameter gradients
// over entries with nonzero analytic value plus a few arbitrary ones.
double worst_gradient_error(FieldParams& params, const FieldParams& analytic,
                            const std::function<double(const FieldParams&)>& loss, int per_tensor, uint64_t seed,
                            int* checked) {
  std::vector<double*> pdata;
  std::vector<const double*> gdata;
  std::vector<size_t> sizes;
  params.for_each_tensor([&](const std::string&, double* d, size_t, const std::vector<uint64_t>&) { pdata.push_back(d); });
  analytic.for_each_tensor([&](const std::string&, const double* d, size_t n, const std::vector<uint64_t>&) {
    gdata.push_back(d);
    sizes.push_back(n);
  });
  Rng rng(seed);
  double worst = 0.0;
  const double h = 1e-4;
  for (size_t t = 0; t < pdata.size(); ++t) {
    std::vector<size_t> nonzero, pick;
    for (size_t i = 0; i < sizes[t]; ++i)
      if (gdata[t][i] != 0.0) nonzero.push_back(i);
    for (int k = 0; k < per_tensor && !nonzero.empty(); ++k)
      pick.push_back(nonzero[rng.uniform_int(0, static_cast<int64_t>(nonzero.size()) - 1)]);
    for (int k = 0; k < 2; ++k) pick.push_back(static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(sizes[t]) - 1)));
    for (size_t i : pick) {
      double& w = pdata[t][i];
      const double saved = w;
      w = saved + h;
      const double lp = loss(params);
      w = saved - h;
      const double lm = loss(params);
      w = saved;
      const double a = gdata[t][i], n = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(a - n) / (std::max(std::abs(a), std::abs(n)) + 1e-6));
      ++*checked;
    }
  }
  return worst;
}

PoseShapeParams random_params(const BodyModelAsset& a, Rng& rng) {
  PoseShapeParams p = PoseShapeParams::rest(a);
  for (Eigen::Index i = 0; i < p.beta.size(); ++i) p.beta[i] = rng.uniform(-2, 2);
  for (Eigen::Index j = 0; j < p.xi.rows(); ++j)
    for (int c = 0; c < 3; ++c) p.xi(j, c) = rng.uniform(-0.6, 0.6);
  p.global_translation = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
  return p;
}

std::vector<uint8_t> mesh_mask(const PosedBody& body, const Camera& cam) {
  return oracle::rasterize_mask(body.mesh(), cam.position, cam.look_at, cam.up, cam.fov_y, cam.width, cam.height);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

Outcome density_prior() {
  Outcome o;
  const double a = 0.001;
  double worst = 0.0;
  for (double d : {-0.1, -0.01, -0.001, 0.0, 0.001, 0.01, 0.1}) {
    const long double ref = oracle::density(d, a);
    const double got = density_from_distance(d, a);
    if (ref == 0.0L)
      o.require(got == 0.0, "zero beyond cutoff at d=" + std::to_string(d));
    else
      worst = std::max(worst, std::abs(got - static_cast<double>(ref)) / static_cast<double>(ref));
  }
  o.require(worst <= 1e-6, "relative error");
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10000; ++i) {
    const double s = density_from_distance(-0.2 + 0.4 * i / 9999.0, a);
    monotone = monotone && s <= prev && s >= 0.0;
    prev = s;
  }
  o.require(monotone, "monotone sweep");
  o.detail << "max rel err " << worst << ", 10k sweep monotone";
  return o;
}

Outcome lbs() {
  Outcome o;
  const auto& asset = *builtin_asset();
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PoseShapeParams p = random_params(asset, rng);
    const PosedBody body = pose_body(asset, p);
    const oracle::DenseLbs ref = oracle::dense_lbs(asset, p.beta, p.xi, p.global_translation);
    worst = std::max(worst, (body.vertices - ref.vertices).cwiseAbs().maxCoeff());
  }
  o.require(worst <= 1e-6, "posed vertices vs oracle");
  const PosedBody rest = pose_body(asset, PoseShapeParams::rest(asset));
  const double identity = (rest.vertices - asset.template_vertices).cwiseAbs().maxCoeff();
  o.require(identity <= 1e-6, "identity pose");

  double round_trip = 0.0;
  for (int which = 1; which <= 3; ++which) {
    const PosedBody obs = pose_body(asset, observed_pose(which));
    const Deformation def(a_pose_body(), obs, std::make_shared<const SpatialIndex>(obs.mesh()));
    Rng pick(100 + which);
    for (int k = 0; k < 1000; ++k) {
      const int v = static_cast<int>(pick.uniform_int(0, obs.vertices.rows() - 1));
      const auto r = def.inverse_lbs(vertex(obs, v));
      round_trip = std::max(round_trip, (r.x - vertex(a_pose_body(), static_cast<int>(r.vertex))).norm());
    }
  }
  o.require(round_trip <= 1e-5, "inverse LBS round trip");
  o.detail << "oracle max err " << worst << ", identity err " << identity << ", inverse round trip " << round_trip;
  return o;
}

Outcome rendering() {
  Outcome o;
  const double ln2 = std::log(2.0);
  const double sigma[2] = {ln2, ln2}, delta[2] = {1.0, 1.0}, colors[8] = {1, 2, 3, 4, -1, 0.5, 8, 0};
  const RayComposite two = composite_ray(2, sigma, delta, colors, Vec4::Zero());
  const double color_err = (two.color - (0.5 * Vec4(1, 2, 3, 4) + 0.25 * Vec4(-1, 0.5, 8, 0))).cwiseAbs().maxCoeff();
  const double opacity_err = std::abs(two.opacity - 0.75);
  o.require(color_err <= 1e-7 && opacity_err <= 1e-7, "two-sample closed form");
  Rng rng(1);
  std::vector<double> s, d, c, w;
  long double max_sum = 0.0L;
  double min_w = 0.0, max_opacity = 0.0;
  for (int r = 0; r < 100000; ++r) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    s.resize(n);
    d.resize(n);
    w.resize(n);
    c.assign(4 * n, 1.0);
    for (int i = 0; i < n; ++i) {
      s[i] = rng.uniform() < 0.3 ? 0.0 : std::exp(rng.uniform(-5, 8));
      d[i] = rng.uniform(0.0, 0.2);
    }
    const RayComposite out = composite_ray(n, s.data(), d.data(), c.data(), Vec4::Zero(), 0.0, w.data());
    long double sum = 0.0L;
    for (double wi : w) {
      min_w = std::min(min_w, wi);
      sum += wi;
    }
    max_sum = std::max(max_sum, sum);
    max_opacity = std::max(max_opacity, out.opacity);
  }
  o.require(min_w >= 0.0, "non-negative weights");
  o.require(max_sum <= 1.0L && max_opacity <= 1.0, "sum of weights");
  o.detail << "closed form err " << std::max(color_err, opacity_err) << ", max sum W over 1e5 rays " << static_cast<double>(max_sum) << " (1 - " << static_cast<double>(1.0L - max_sum)
            << "), max opacity " << max_opacity;
  return o;
}

Outcome silhouette() {
  Outcome o;
  const auto asset = builtin_asset();
  const FieldParams p = FieldParams::initialize(GridConfig{}, 3);
  RenderConfig cfg;
  cfg.samples_per_ray = 64;
  const Camera cam = Camera::preview(64, 64);
  o.detail << "IoU";
  for (int pose = 0; pose < 4; ++pose) {
    const PosedBody body = pose_body(*asset, observed_pose(pose));
    const SpaceContext ctx = pose == 0 ? SpaceContext::canonical(body, 0.001)
                                       : SpaceContext::observation(a_pose_body(), body, 0.001);
    const double iou = oracle::iou(oracle::threshold_mask(render_rays(p, ctx, cam, cfg).opacity), mesh_mask(body, cam));
    o.require(iou >= 0.95, "pose " + std::to_string(pose));
    o.detail << (pose == 0 ? " A-pose " : " pose" + std::to_string(pose) + " ") << iou;
  }
  const SpaceContext off = SpaceContext::canonical(a_pose_body(), 0.001, false);
  const double iou_off = oracle::iou(oracle::threshold_mask(render_rays(p, off, cam, cfg).opacity), mesh_mask(a_pose_body(), cam));
  o.require(iou_off < 0.05, "prior disabled");
  o.detail << ", prior disabled " << iou_off;
  return o;
}

Outcome differentiation() {
  Outcome o;
  int checked = 0;
  double worst_all = 0.0;
  auto report = [&](const std::string& name, double worst) {
    o.require(worst <= 1e-3, name);
    o.detail << name << " " << worst << " ";
    worst_all = std::max(worst_all, worst);
  };

  {  // encoder, grid and position
    const GridConfig cfg = tiny_grid();
    FieldParams p = FieldParams::zeros(cfg);
    randomize(p, 7);
    const GridEncoder enc(cfg);
    Rng rng(8);
    std::vector<double> dout(enc.output_dim());
    for (auto& v : dout) v = rng.normal();
    const Vec3 x(0.31, -0.47, 0.12);
    auto loss = [&](const Eigen::VectorXd& grid, const Vec3& at) {
      std::vector<double> out(dout.size());
      enc.encode(grid.data(), at, out.data());
      double s = 0;
      for (size_t f = 0; f < out.size(); ++f) s += dout[f] * out[f];
      return s;
    };
    Eigen::VectorXd dgrid = Eigen::VectorXd::Zero(p.grid.size());
    Vec3 dx;
    enc.backward(p.grid.data(), x, dout.data(), dgrid.data(), &dx);
    const double h = 1e-4;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.grid.size(); ++i) {
      if (dgrid[i] == 0.0 && i % 7 != 0) continue;
      Eigen::VectorXd g = p.grid;
      g[i] += h;
      const double lp = loss(g, x);
      g[i] -= 2 * h;
      const double n = (lp - loss(g, x)) / (2 * h);
      worst = std::max(worst, std::abs(dgrid[i] - n) / (std::max(std::abs(dgrid[i]), std::abs(n)) + 1e-6));
      ++checked;
    }
    for (int a = 0; a < 3; ++a) {
      const double n = (loss(p.grid, x + h * Vec3::Unit(a)) - loss(p.grid, x - h * Vec3::Unit(a))) / (2 * h);
      worst = std::max(worst, std::abs(dx[a] - n) / (std::max(std::abs(dx[a]), std::abs(n)) + 1e-6));
      ++checked;
    }
    report("encode", worst);
  }

  auto field_check = [&](const SpaceContext& ctx, const Points3& x, uint64_t seed) {
    FieldParams p = FieldParams::zeros(tiny_grid());
    randomize(p, seed);
    const PreparedPoints pts = prepare_points(ctx, x);
    Rng rng(seed + 1);
    Eigen::VectorXd ws(x.cols());
    Latent wc(4, x.cols());
    Points3 wn(3, x.cols());
    for (Eigen::Index i = 0; i < ws.size(); ++i) ws[i] = rng.normal();
    for (Eigen::Index i = 0; i < wc.size(); ++i) wc.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < wn.size(); ++i) wn.data()[i] = rng.normal();
    auto loss = [&](const FieldOutputs& f) {
      return ws.dot(f.sigma) + (wc.array() * f.color.array()).sum() + (wn.array() * f.normal.array()).sum();
    };
    FieldTape tape;
    tape.forward(p, ctx, pts);
    FieldParams g = p.zeros_like();
    tape.backward(ws, wc, wn, &g);
    const double worst = worst_gradient_error(
        p, g, [&](const FieldParams& q) { FieldTape t; return loss(t.forward(q, ctx, pts)); }, 15, seed + 2, &checked);
    return std::make_pair(worst, g.nonrigid.layers.back().weight.squaredNorm());
  };
  {
    const SpaceContext canon = SpaceContext::canonical(a_pose_body(), 0.01);
    Rng rng(40);
    Points3 x(3, 12);
    for (int i = 0; i < 12; ++i) x.col(i) = random_in(rng, 0.8);
    report("eval_canonical", field_check(canon, x, 41).first);
  }
  {
    const PosedBody obs = pose_body(*builtin_asset(), observed_pose(1));
    const SpaceContext ctx = SpaceContext::observation(a_pose_body(), obs, 0.01);
    Rng rng(50);
    Points3 x(3, 12);
    for (int i = 0; i < 12; ++i)
      x.col(i) = vertex(obs, static_cast<int>(rng.uniform_int(0, obs.vertices.rows() - 1))) + 0.03 * random_in(rng, 1.0);
    const auto [worst, nr] = field_check(ctx, x, 51);
    o.require(nr > 0.0, "non-rigid path reached");
    report("eval_observation", worst);
  }
  {
    FieldParams p = FieldParams::zeros(tiny_grid());
    randomize(p, 60);
    Rng rng(61);
    Points3 dirs(3, 6);
    for (int i = 0; i < 6; ++i) dirs.col(i) = random_in(rng, 1.0).normalized();
    Latent w(4, 6);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    BackgroundTape tape;
    tape.forward(p, dirs);
    FieldParams g = p.zeros_like();
    tape.backward(p, w, &g);
    report("background", worst_gradient_error(
                             p, g, [&](const FieldParams& q) { BackgroundTape t; return (t.forward(q, dirs).array() * w.array()).sum(); },
                             20, 62, &checked));
  }
  {
    FieldParams p = FieldParams::zeros(tiny_grid());
    randomize(p, 90);
    for (auto* mlp : {&p.main, &p.nonrigid})
      for (size_t l = 0; l + 1 < mlp->layers.size(); ++l) mlp->layers[l].bias.array() += 1.5;
    p.main.layers.back().bias[kDensityRow] += 3.0;
    const PosedBody obs = pose_body(*builtin_asset(), observed_pose(1));
    const SpaceContext ctx = SpaceContext::observation(a_pose_body(), obs, 0.05);
    const Camera cam = Camera::orbit(1.2, 10, 25, 45, 4, 4);
    RenderConfig cfg;
    cfg.samples_per_ray = 24;
    Rng rng(91);
    Latent w(4, 16);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    RenderTape tape;
    tape.forward(p, ctx, cam, cfg);
    FieldParams g = p.zeros_like();
    tape.backward(w, 1.0, nullptr, &g);
    report("render pixel", worst_gradient_error(
                               p, g, [&](const FieldParams& q) { return (render_rays(q, ctx, cam, cfg).features.array() * w.array()).sum(); },
                               12, 92, &checked));
  }
  {
    Rng rng(3);
    std::vector<FieldSample> batch(6);
    for (auto& s : batch) {
      s.sigma = rng.uniform(0.0, 3.0);
      s.normal = random_in(rng, 2.0);
      s.density_gradient = random_in(rng, 2.0);
    }
    const NormalLoss l = normal_consistency_loss(batch);
    const double h = 1e-6;
    double worst = 0.0;
    auto fd = [&](double& v) {
      const double saved = v;
      v = saved + h;
      const double lp = normal_consistency_loss(batch).value;
      v = saved - h;
      const double lm = normal_consistency_loss(batch).value;
      v = saved;
      return (lp - lm) / (2 * h);
    };
    for (size_t i = 0; i < batch.size(); ++i) {
      const double n = fd(batch[i].sigma);
      worst = std::max(worst, std::abs(l.dsigma[i] - n) / (std::abs(n) + 1e-12));
      for (int a = 0; a < 3; ++a) {
        const double m = fd(batch[i].normal[a]);
        worst = std::max(worst, std::abs(l.dnormal(a, i) - m) / (std::abs(m) + 1e-12));
      }
      checked += 4;
    }
    report("L_n", worst);
  }
  o.detail << "(" << checked << " entries)";
  return o;
}

Outcome normal_loss() {
  Outcome o;
  FieldSample s;
  s.sigma = 1.0;
  s.normal = Vec3::Zero();
  s.density_gradient = Vec3(1, 0, 0);
  const double v = normal_consistency_loss({s}).value;
  o.require(std::abs(v - 0.632121) <= 1e-6, "closed form");
  Rng rng(17);
  bool iff = true;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<FieldSample> batch(8);
    bool expect_zero = true;
    for (auto& b : batch) {
      b.sigma = rng.uniform(0.0, 3.0);
      b.density_gradient = random_in(rng, 2.0);
      b.normal = random_in(rng, 2.0);
      const double u = rng.uniform();
      if (u < 0.4)
        b.sigma = 0.0;
      else if (u < 0.8)
        b.normal = *b.density_gradient;
      else
        expect_zero = false;
    }
    iff = iff && ((normal_consistency_loss(batch).value == 0.0) == expect_zero);
  }
  o.require(iff, "zero iff masked or matched");
  o.detail << "L_n = " << std::setprecision(9) << v << ", zero-iff over 500 random batches " << (iff ? "holds" : "violated");
  return o;
}

Outcome mesh_extraction() {
  Outcome o;
  ExtractionConfig c;
  c.iso_level = 500.0;
  const TriangleMesh sphere = extract_mesh(
      [](const Points3& x, Eigen::Ref<Eigen::VectorXd> out) {
        for (Eigen::Index i = 0; i < x.cols(); ++i) out[i] = x.col(i).norm() < 0.5 ? 1000.0 : 0.0;
      },
      c);
  double radius_err = 0.0;
  for (const auto& v : sphere.vertices) radius_err = std::max(radius_err, std::abs(v.norm() - 0.5));
  const double voxel = 2.0 / c.grid_resolution;
  o.require(!sphere.empty() && radius_err <= 2 * voxel, "sphere radius");

  const SpaceContext ctx = SpaceContext::canonical(a_pose_body(), 1e-3);
  const TriangleMesh body = extract_mesh(FieldParams::initialize(GridConfig{}, 1), ctx, ExtractionConfig{});
  const double hd = oracle::hausdorff(body, ctx.body->mesh());
  const double diag = std::sqrt(3.0) * voxel;
  o.require(!body.empty() && hd <= 2 * diag, "prior body Hausdorff");
  o.detail << "sphere radius err " << radius_err / voxel << " voxels, body Hausdorff " << hd / diag << " voxel diagonals";
  return o;
}

struct ToyRun {
  double seconds = 0.0;
  double mse_before = 0.0, mse_after = 0.0;
  double iou = 0.0;
  fs::path loss_csv, checkpoint;
};

// Mean over both spaces and the four cardinal preview views.
double preview_mse(const FieldParams& p, const Scene& scene, const Latent& target, int res) {
  RenderConfig rc;
  rc.samples_per_ray = 64;
  double sum = 0.0;
  for (Space s : {Space::kCanonical, Space::kObservation})
    for (double az : {0.0, 90.0, 180.0, 270.0})
      sum += (render_rays(p, scene.context(s), Camera::preview(res, res, az), rc).features - target).squaredNorm() /
             static_cast<double>(target.size());
  return sum / 8;
}

ToyRun toy_run(const TrainConfig& config, const fs::path& dir, bool evaluate) {
  ToyRun run;
  const auto t0 = std::chrono::steady_clock::now();
  Trainer trainer(config, make_denoiser(config));
  const TrainResult result = train(trainer, {dir, true, {}});
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.loss_csv = result.loss_csv;
  run.checkpoint = result.checkpoints.back();
  if (!evaluate) return run;

  const Scene scene = build_scene(config);
  const int res = config.render_resolution;
  const Latent target = Latent::Constant(4, res * res, config.denoiser.target);
  run.mse_before = preview_mse(FieldParams::initialize(config.grid, Rng::derive_seed(config.seed, 0)), scene, target, res);
  run.mse_after = preview_mse(trainer.params(), scene, target, res);
  RenderConfig rc;
  rc.samples_per_ray = 64;
  const Camera cam = Camera::preview(res, res);
  run.iou = oracle::iou(oracle::threshold_mask(render_rays(trainer.params(), scene.observation, cam, rc).opacity),
                        mesh_mask(scene.observed, cam));
  return run;
}

Outcome mock_sds(const TrainConfig& toy, const fs::path& work, std::optional<ToyRun>* first_run) {
  Outcome o;
  {
    const NoiseSchedule s;
    Rng rng(23);
    const Latent target = Latent::Constant(4, 256, 0.25);
    MockDenoiser mock(target);
    Latent x(4, 256);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const double initial = (x - target).squaredNorm();
    for (int step = 0; step < 200; ++step) x -= sds_pixel_grad(mock, s, x, 16, 16, {}, rng).gradient;
    const double reduction = 1.0 - (x - target).squaredNorm() / initial;
    o.require(reduction >= 0.99, "raw pixels");
    o.detail << "raw 16x16 reduction " << 100 * reduction << "%, ";
  }
  if (!first_run) {
    o.detail << "toy run skipped";
    o.pass = false;
    return o;
  }
  const ToyRun run = toy_run(toy, work / "toy_a", true);
  *first_run = run;
  const double reduction = 1.0 - run.mse_after / run.mse_before;
  o.require(reduction >= 0.90, "toy MSE reduction");
  o.require(run.iou >= 0.8, "posed-mask IoU");
  o.require(run.seconds < 15 * 60, "runtime");
  o.detail << "toy " << toy.render_resolution << "x" << toy.render_resolution << " " << toy.iterations << " steps: MSE "
           << run.mse_before << " -> " << run.mse_after << " (" << 100 * reduction << "%), IoU " << run.iou << ", "
           << run.seconds << " s";
  return o;
}

Outcome determinism(const TrainConfig& toy, const fs::path& work, const std::optional<ToyRun>& first) {
  Outcome o;
  const ToyRun a = first ? *first : toy_run(toy, work / "toy_a", false);
  const ToyRun b = toy_run(toy, work / "toy_b", false);
  const bool csv = slurp(a.loss_csv) == slurp(b.loss_csv);
  o.require(csv, "loss CSV");
  bool checkpoints = true;
  size_t count = 0;
  for (const auto& e : fs::directory_iterator(a.loss_csv.parent_path() / "checkpoints")) {
    const fs::path other = b.loss_csv.parent_path() / "checkpoints" / e.path().filename();
    checkpoints = checkpoints && fs::exists(other) && slurp(e.path()) == slurp(other);
    ++count;
  }
  o.require(checkpoints && count > 0, "checkpoints");
  o.detail << "loss CSV " << (csv ? "identical" : "differs") << ", " << count << " checkpoints "
           << (checkpoints ? "identical" : "differ");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance report"};
  std::string toy_path = AVATARFORGE_TOY_CONFIG, work_dir;
  std::vector<std::string> only;
  bool skip_toy = false;
  app.add_option("--toy-config", toy_path, "Toy training config")->capture_default_str();
  app.add_option("--work", work_dir, "Directory for toy-run artifacts (default: a temp dir)");
  app.add_option("--only", only, "Run only these criteria (repeatable)");
  app.add_flag("--skip-toy", skip_toy, "Skip the full toy runs (their criteria report FAIL)");
  CLI11_PARSE(app, argc, argv);

  const fs::path work = work_dir.empty() ? fs::temp_directory_path() / "avatarforge_acceptance" : fs::path(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);
  const TrainConfig toy = load_config(toy_path);
  std::optional<ToyRun> first;

  struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"density-prior", 1, density_prior},
      {"lbs", 10, lbs},
      {"rendering-oracle", 10, rendering},
      {"silhouette", 60, silhouette},
      {"differentiation", 60, differentiation},
      {"mock-sds", 15 * 60 + 120,
       [&] { return mock_sds(toy, work, skip_toy ? nullptr : &first); }},
      {"normal-loss", 1, normal_loss},
      {"mesh-extraction", 60, mesh_extraction},
      {"determinism", 2 * 15 * 60,
       [&] {
         if (skip_toy) {
           Outcome o;
           o.pass = false;
           o.detail << "toy runs skipped";
           return o;
         }
         return determinism(toy, work, first);
       }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) o.require(false, "runtime budget " + std::to_string(static_cast<int>(c.budget_s)) + " s");
    failed += !o.pass;
    std::printf("%s %-17s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
