#include "avatarforge/bodymodel.hpp"
#include "avatarforge/image_io.hpp"
#include "avatarforge/meshexport.hpp"
#include "avatarforge/remote_denoiser.hpp"
#include "avatarforge/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace avatarforge;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitUsage = 2, kExitDenoiser = 3, kExitNumeric = 4;

struct Globals {
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  fs::path out = "out";
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw InputError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

std::string relative_to(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

// manifest.json in `dir`: command, seed and the sorted artifact list.
void write_manifest(const fs::path& dir, const std::string& command, uint64_t seed, std::vector<fs::path> artifacts,
                    json extra = json::object()) {
  std::vector<std::string> names;
  for (const auto& a : artifacts) names.push_back(relative_to(a, dir));
  std::sort(names.begin(), names.end());
  json m = std::move(extra);
  m["command"] = command;
  m["seed"] = seed;
  m["artifacts"] = names;
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  f << m.dump(2) << "\n";
  if (!f) throw Error("cannot write " + (dir / "manifest.json").string());
}

// Field state for the inspection commands: a checkpoint when given,
// otherwise the initialization of the (default or supplied) config.
struct Loaded {
  TrainConfig config;
  FieldParams params;
  int64_t step = 0;
};

Loaded load_state(const Globals& g, const std::string& config_path, const std::string& checkpoint_path,
                  const std::string& pose_path) {
  Loaded s;
  if (!checkpoint_path.empty()) {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    s.config = config_from_json(ck.config_json);
    s.params = std::move(ck.params);
    s.step = ck.step;
  } else {
    if (!config_path.empty()) s.config = load_config(config_path);
    if (g.seed) s.config.seed = *g.seed;
    s.params = FieldParams::initialize(s.config.grid, Rng::derive_seed(s.config.seed, 0));
  }
  if (!pose_path.empty()) s.config.observation_pose = slurp(pose_path);
  if (g.threads) s.config.threads = *g.threads;
  return s;
}

json vec_json(const double* v, int n) {
  json a = json::array();
  for (int i = 0; i < n; ++i) a.push_back(v[i]);
  return a;
}

Vec3 parse_point(const std::string& text) {
  Vec3 p;
  std::stringstream ss(text);
  std::string item;
  int k = 0;
  while (std::getline(ss, item, ',')) {
    if (k == 3) throw InputError("--point expects x,y,z");
    try {
      size_t used = 0;
      p[k] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InputError("--point component is not a number: '" + item + "'");
    }
    ++k;
  }
  if (k != 3) throw InputError("--point expects x,y,z");
  return p;
}

int run_generate(const Globals& g, const std::string& config_path, const std::vector<std::string>& overrides,
                 const std::string& denoiser_kind, const std::string& resume, bool quiet) {
  if (config_path.empty() || !fs::exists(config_path)) throw InputError("config not found: " + config_path);
  std::string text = slurp(config_path);
  std::vector<std::string> sets = overrides;
  if (!denoiser_kind.empty()) sets.push_back("denoiser.kind=\"" + denoiser_kind + "\"");
  if (const char* url = std::getenv("AVATARFORGE_BRIDGE_URL"); url && *url)
    sets.push_back("denoiser.url=" + json(std::string(url)).dump());
  text = apply_overrides(text, sets);
  TrainConfig config = config_from_json(text);
  if (g.seed) config.seed = *g.seed;
  if (g.threads) config.threads = *g.threads;
  config.validate();

  std::shared_ptr<Denoiser> denoiser = make_denoiser(config);
  if (auto* remote = dynamic_cast<RemoteDenoiser*>(denoiser.get())) {
    const std::string model = remote->health();
    if (!quiet) std::cerr << "denoiser ready: " << model << "\n";
  }

  Trainer trainer(config, denoiser);
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));
  fs::create_directories(g.out);
  {
    std::ofstream f(g.out / "config.json", std::ios::trunc);
    f << config_to_json(config) << "\n";
  }
  TrainOutputs outputs{g.out, true, {}};
  if (!quiet)
    outputs.on_step = [&](const LossReport& r) {
      if (r.step % config.preview_every == 0 || r.step == config.iterations)
        std::cerr << "step " << r.step << "/" << config.iterations << "  loss " << r.total_weighted << "\n";
    };
  const TrainResult result = train(trainer, outputs);

  std::vector<fs::path> artifacts = result.checkpoints;
  artifacts.insert(artifacts.end(), result.previews.begin(), result.previews.end());
  artifacts.push_back(result.loss_csv);
  artifacts.push_back(g.out / "config.json");
  json extra;
  extra["final_step"] = trainer.current_step();
  extra["final_checkpoint"] = relative_to(result.checkpoints.back(), g.out);
  extra["denoiser"] = denoiser->name();
  write_manifest(g.out, "generate", config.seed, artifacts, extra);
  std::cout << result.checkpoints.back().string() << "\n";
  return kExitOk;
}

int run_render(const Globals& g, const std::string& config_path, const std::string& checkpoint_path,
               const std::string& pose_path, std::string space_name, double azimuth, int resolution, int samples,
               int upscale_factor) {
  const Loaded s = load_state(g, config_path, checkpoint_path, pose_path);
  if (space_name.empty()) space_name = pose_path.empty() ? "canonical" : "observation";
  const Space space = space_from_string(space_name);
  if (resolution < 1 || resolution > 2048) throw InputError("--resolution must be in [1, 2048]");
  if (samples < 1) throw InputError("--samples must be positive");
  if (upscale_factor < 1 || upscale_factor > 16) throw InputError("--upscale must be in [1, 16]");

  const Scene scene = build_scene(s.config);
  RenderConfig rc;
  rc.samples_per_ray = samples;
  rc.threads = s.config.threads;
  rc.rays_per_chunk = s.config.rays_per_chunk;
  const LatentImage img = render_rays(s.params, scene.context(space), Camera::preview(resolution, resolution, azimuth), rc);

  fs::create_directories(g.out);
  const std::string stem = "render_" + space_name;
  const fs::path rgb = g.out / (stem + ".png"), alpha = g.out / (stem + "_opacity.png"), latent = g.out / (stem + ".avim");
  write_png(rgb, upscale(mock_decode(img), upscale_factor));
  write_png(alpha, upscale(opacity_image(img), upscale_factor));
  save_latent(img, latent);
  json extra;
  extra["space"] = space_name;
  extra["step"] = s.step;
  write_manifest(g.out, "render", s.config.seed, {rgb, alpha, latent}, extra);
  std::cout << rgb.string() << "\n";
  return kExitOk;
}

int run_export(const Globals& g, const std::string& config_path, const std::string& checkpoint_path,
               const std::string& pose_path, const std::string& space_name, double iso, int resolution,
               const std::string& format) {
  const Loaded s = load_state(g, config_path, checkpoint_path, pose_path);
  if (format != "obj" && format != "ply") throw InputError("--format must be obj or ply");
  ExtractionConfig ec;
  ec.grid_resolution = resolution;
  ec.iso_level = iso;
  ec.space = space_from_string(space_name);
  ec.threads = s.config.threads;
  ec.validate();

  const Scene scene = build_scene(s.config);
  const TriangleMesh mesh = extract_mesh(s.params, scene.context(ec.space), ec);
  fs::create_directories(g.out);
  const fs::path path = g.out / ("mesh_" + space_name + "." + format);
  write_mesh(mesh, path, format == "obj" ? MeshFormat::kObj : MeshFormat::kPly);
  json extra;
  extra["space"] = space_name;
  extra["vertices"] = mesh.vertices.size();
  extra["faces"] = mesh.faces.size();
  write_manifest(g.out, "export-mesh", s.config.seed, {path}, extra);
  if (mesh.empty()) std::cerr << "warning: no density reaches iso " << iso << "; mesh is empty\n";
  std::cout << path.string() << "\n";
  return kExitOk;
}

int run_probe(const Globals& g, const std::string& config_path, const std::string& checkpoint_path,
              const std::string& pose_path, const std::string& space_name, const std::string& point_text) {
  const Vec3 x = parse_point(point_text);
  if (!x.allFinite() || !inside_scene_box(x)) throw InputError("point lies outside the scene box [-1,1]^3");
  const Loaded s = load_state(g, config_path, checkpoint_path, pose_path);
  const Space space = space_from_string(space_name);
  const Scene scene = build_scene(s.config);
  const SpaceContext& ctx = scene.context(space);
  const FieldSample f = eval_field(s.params, ctx, x);
  const Vec3 grad = density_gradient(s.params, ctx, x, GradientMode::kAnalytic);

  json out;
  out["space"] = space_name;
  out["point"] = vec_json(x.data(), 3);
  out["sigma"] = f.sigma;
  out["color"] = vec_json(f.color.data(), 4);
  out["normal"] = vec_json(f.normal.data(), 3);
  out["prior_sigma"] = f.prior_sigma;
  out["density_gradient"] = vec_json(grad.data(), 3);
  out["step"] = s.step;
  fs::create_directories(g.out);
  const fs::path path = g.out / "probe.json";
  std::ofstream(path, std::ios::trunc) << out.dump(2) << "\n";
  write_manifest(g.out, "probe", s.config.seed, {path});
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

// --out naming an .avbm file is the asset path; otherwise <out>/capsule.avbm.
int run_gen_asset(const Globals& g) {
  const fs::path target = g.out.extension() == ".avbm" ? g.out : g.out / "capsule.avbm";
  const fs::path dir = target.has_parent_path() ? target.parent_path() : fs::path(".");
  fs::create_directories(dir);
  save_asset(make_capsule_person(), target);
  load_asset(target).validate();
  write_manifest(dir, "gen-asset", g.seed.value_or(0), {target});
  std::cout << target.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avatarforge: text-guided animatable avatars on a dual-space neural field"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Expand all subcommand help");

  Globals g;
  uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
  auto* seed_opt = app.add_option("--seed", seed, "Seed for initialization and sampling")->check(CLI::NonNegativeNumber);
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1, 256));
  app.add_option("--out", out, "Output directory for artifacts and manifest.json")->capture_default_str();

  std::string config_path, checkpoint_path, pose_path, denoiser_kind, resume, point, format = "obj";
  std::string space = "canonical", render_space;
  std::vector<std::string> overrides;
  double azimuth = 0.0, iso = 25.0;
  int resolution = 64, mesh_resolution = 128, samples = 64, upscale_factor = 1;
  bool quiet = false;

  auto* gen = app.add_subcommand("generate", "Optimize the field against the configured denoiser");
  gen->add_option("--config", config_path, "Training config (JSON)")->required();
  gen->add_option("--set", overrides, "Config override a.b=value (repeatable)");
  gen->add_option("--denoiser", denoiser_kind, "Override denoiser.kind")->check(CLI::IsMember({"mock", "echo", "remote"}));
  gen->add_option("--resume", resume, "Continue from a checkpoint");
  gen->add_flag("--quiet", quiet, "No progress output");

  auto* render = app.add_subcommand("render", "Render a full-body preview of one space");
  render->add_option("--config", config_path, "Config used when no checkpoint is given");
  render->add_option("--checkpoint", checkpoint_path, "Field checkpoint (.avck); default is a fresh initialization");
  render->add_option("--pose", pose_path, "Observation pose JSON");
  render->add_option("--space", render_space, "canonical|observation (default: observation with --pose)")
      ->check(CLI::IsMember({"canonical", "observation"}));
  render->add_option("--azimuth", azimuth, "Camera azimuth in degrees")->capture_default_str();
  render->add_option("--resolution", resolution, "Image side in pixels")->capture_default_str();
  render->add_option("--samples", samples, "Samples per ray")->capture_default_str();
  render->add_option("--upscale", upscale_factor, "Nearest-neighbour PNG upscale")->capture_default_str();

  auto* mesh = app.add_subcommand("export-mesh", "Extract the density iso-surface");
  mesh->add_option("--config", config_path, "Config used when no checkpoint is given");
  mesh->add_option("--checkpoint", checkpoint_path, "Field checkpoint (.avck)");
  mesh->add_option("--pose", pose_path, "Observation pose JSON");
  mesh->add_option("--space", space, "canonical|observation")
      ->check(CLI::IsMember({"canonical", "observation"}))
      ->capture_default_str();
  mesh->add_option("--iso", iso, "Density iso-level")->capture_default_str();
  mesh->add_option("--resolution", mesh_resolution, "Grid cells per axis")->capture_default_str();
  mesh->add_option("--format", format, "obj|ply")->check(CLI::IsMember({"obj", "ply"}))->capture_default_str();

  auto* probe = app.add_subcommand("probe", "Print the field at one point as JSON");
  probe->add_option("--config", config_path, "Config used when no checkpoint is given");
  probe->add_option("--checkpoint", checkpoint_path, "Field checkpoint (.avck)");
  probe->add_option("--pose", pose_path, "Observation pose JSON");
  probe->add_option("--point", point, "x,y,z")->required();
  probe->add_option("--space", space, "canonical|observation")
      ->check(CLI::IsMember({"canonical", "observation"}))
      ->capture_default_str();

  auto* gen_asset = app.add_subcommand("gen-asset", "Write the built-in capsule body asset to --out (.avbm path or directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (*seed_opt) g.seed = seed;
  if (*threads_opt) g.threads = threads;
  g.out = out;

  try {
    if (*gen) return run_generate(g, config_path, overrides, denoiser_kind, resume, quiet);
    if (*render)
      return run_render(g, config_path, checkpoint_path, pose_path, render_space, azimuth, resolution, samples,
                        upscale_factor);
    if (*mesh) return run_export(g, config_path, checkpoint_path, pose_path, space, iso, mesh_resolution, format);
    if (*probe) return run_probe(g, config_path, checkpoint_path, pose_path, space, point);
    if (*gen_asset) return run_gen_asset(g);
  } catch (const DenoiserError& e) {
    std::cerr << "denoiser error: " << e.what() << "\n";
    return kExitDenoiser;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
