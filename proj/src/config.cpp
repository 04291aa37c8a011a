#include "avatarforge/config.hpp"

#include <json.hpp>

#include <fstream>
#include <iterator>

namespace avatarforge {

using nlohmann::json;

namespace {

json to_json(const TrainConfig& c) {
  json pose = json::parse(c.observation_pose, nullptr, false);
  if (pose.is_discarded()) pose = json::object();
  return json{
      {"iterations", c.iterations},
      {"lr", c.lr},
      {"lambda_n", c.lambda_n},
      {"lambda_sds", c.lambda_sds},
      {"clip_norm", c.clip_norm},
      {"seed", c.seed},
      {"observation_pose", pose},
      {"prompt", c.prompt},
      {"guidance_scale", c.guidance_scale},
      {"denoiser",
       {{"kind", c.denoiser.kind},
        {"target", c.denoiser.target},
        {"url", c.denoiser.url},
        {"attempts", c.denoiser.attempts},
        {"backoff_ms", c.denoiser.backoff_ms}}},
      {"render_resolution", c.render_resolution},
      {"samples_per_ray", c.samples_per_ray},
      {"rays_per_chunk", c.rays_per_chunk},
      {"prior_sharpness", c.prior_sharpness},
      {"grid",
       {{"levels", c.grid.levels},
        {"features_per_level", c.grid.features_per_level},
        {"base_resolution", c.grid.base_resolution},
        {"max_resolution", c.grid.max_resolution},
        {"log2_table_size", c.grid.log2_table_size}}},
      {"camera",
       {{"radius_min", c.camera.radius_min},
        {"radius_max", c.camera.radius_max},
        {"elevation_min", c.camera.elevation_min},
        {"elevation_max", c.camera.elevation_max},
        {"fov_min", c.camera.fov_min},
        {"fov_max", c.camera.fov_max}}},
      {"alternating", c.alternating},
      {"checkpoint_every", c.checkpoint_every},
      {"preview_every", c.preview_every},
      {"threads", c.threads},
      {"asset", c.asset},
  };
}

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix + it.key();
    const auto k = known.find(it.key());
    if (k == known.end()) throw InputError("unknown config key '" + path + "'");
    if (it.key() == "observation_pose") continue;
    if (k->is_object()) {
      if (!it->is_object()) throw InputError("config key '" + path + "' must be an object");
      reject_unknown(*it, *k, path + ".");
    }
  }
}

class Reader {
 public:
  explicit Reader(const json& j) : j_(j) {}

  template <typename T>
  void get(const std::string& path, T* out) const {
    const json* v = &j_;
    size_t start = 0;
    while (true) {
      const size_t dot = path.find('.', start);
      v = &v->at(path.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) fail(path, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) fail(path, "an integer");
      if (std::is_unsigned_v<T> && v->is_number_integer() && !v->is_number_unsigned()) fail(path, "non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v->is_number()) fail(path, "a number");
    } else {
      if (!v->is_string()) fail(path, "a string");
    }
    *out = v->get<T>();
  }

 private:
  [[noreturn]] static void fail(const std::string& path, const char* what) {
    throw InputError("config key '" + path + "' must be " + what);
  }
  const json& j_;
};

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InputError("invalid config: " + what);
  };
  require(iterations >= 0, "iterations must be non-negative");
  require(lr > 0.0, "lr must be positive");
  require(lambda_n >= 0.0 && lambda_sds >= 0.0, "loss weights must be non-negative");
  require(render_resolution > 0 && render_resolution <= 4096, "render_resolution must be positive");
  require(samples_per_ray > 0, "samples_per_ray must be positive");
  require(rays_per_chunk > 0, "rays_per_chunk must be positive");
  require(prior_sharpness > 0.0, "prior_sharpness must be positive");
  require(checkpoint_every > 0 && preview_every > 0, "checkpoint_every and preview_every must be positive");
  require(threads > 0, "threads must be positive");
  require(guidance_scale >= 0.0, "guidance_scale must be non-negative");
  require(denoiser.kind == "mock" || denoiser.kind == "echo" || denoiser.kind == "remote",
          "denoiser.kind must be mock, echo or remote");
  require(denoiser.attempts >= 1, "denoiser.attempts must be at least 1");
  require(denoiser.backoff_ms >= 0, "denoiser.backoff_ms must be non-negative");
  require(grid.levels >= 1 && grid.features_per_level >= 1 && grid.base_resolution >= 1 &&
              grid.max_resolution >= grid.base_resolution && grid.log2_table_size >= 4 && grid.log2_table_size <= 24,
          "grid settings out of range");
  require(camera.radius_min > 0.0 && camera.radius_min <= camera.radius_max, "camera radius range");
  require(camera.elevation_min <= camera.elevation_max, "camera elevation range");
  require(camera.fov_min > 0.0 && camera.fov_min <= camera.fov_max && camera.fov_max < 180.0, "camera fov range");
  const json pose = json::parse(observation_pose, nullptr, false);
  require(!pose.is_discarded() && pose.is_object(), "observation_pose must be an object");
}

TrainConfig config_from_json(const std::string& text) {
  const json given = json::parse(text, nullptr, false);
  if (given.is_discarded()) throw InputError("config is not valid JSON");
  if (!given.is_object()) throw InputError("config must be a JSON object");
  const TrainConfig defaults;
  json merged = to_json(defaults);
  reject_unknown(given, merged, "");
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (it.key() != "observation_pose" && it->is_object())
      for (auto sub = it->begin(); sub != it->end(); ++sub) merged[it.key()][sub.key()] = *sub;
    else
      merged[it.key()] = *it;
  }

  TrainConfig c;
  const Reader r(merged);
  r.get("iterations", &c.iterations);
  r.get("lr", &c.lr);
  r.get("lambda_n", &c.lambda_n);
  r.get("lambda_sds", &c.lambda_sds);
  r.get("clip_norm", &c.clip_norm);
  r.get("seed", &c.seed);
  if (!merged["observation_pose"].is_object()) throw InputError("config key 'observation_pose' must be an object");
  c.observation_pose = merged["observation_pose"].dump();
  r.get("prompt", &c.prompt);
  r.get("guidance_scale", &c.guidance_scale);
  r.get("denoiser.kind", &c.denoiser.kind);
  r.get("denoiser.target", &c.denoiser.target);
  r.get("denoiser.url", &c.denoiser.url);
  r.get("denoiser.attempts", &c.denoiser.attempts);
  r.get("denoiser.backoff_ms", &c.denoiser.backoff_ms);
  r.get("render_resolution", &c.render_resolution);
  r.get("samples_per_ray", &c.samples_per_ray);
  r.get("rays_per_chunk", &c.rays_per_chunk);
  r.get("prior_sharpness", &c.prior_sharpness);
  r.get("grid.levels", &c.grid.levels);
  r.get("grid.features_per_level", &c.grid.features_per_level);
  r.get("grid.base_resolution", &c.grid.base_resolution);
  r.get("grid.max_resolution", &c.grid.max_resolution);
  r.get("grid.log2_table_size", &c.grid.log2_table_size);
  r.get("camera.radius_min", &c.camera.radius_min);
  r.get("camera.radius_max", &c.camera.radius_max);
  r.get("camera.elevation_min", &c.camera.elevation_min);
  r.get("camera.elevation_max", &c.camera.elevation_max);
  r.get("camera.fov_min", &c.camera.fov_min);
  r.get("camera.fov_max", &c.camera.fov_max);
  r.get("alternating", &c.alternating);
  r.get("checkpoint_every", &c.checkpoint_every);
  r.get("preview_every", &c.preview_every);
  r.get("threads", &c.threads);
  r.get("asset", &c.asset);
  c.camera.resolution = c.render_resolution;
  c.validate();
  return c;
}

std::string config_to_json(const TrainConfig& config) { return to_json(config).dump(2); }

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("config not found: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

std::string apply_overrides(const std::string& json_text, const std::vector<std::string>& overrides) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InputError("config is not a JSON object");
  for (const std::string& o : overrides) {
    const size_t eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("override '" + o + "' is not of the form key=value");
    const std::string path = o.substr(0, eq), value = o.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    json* node = &j;
    size_t start = 0;
    while (true) {
      const size_t dot = path.find('.', start);
      const std::string key = path.substr(start, dot - start);
      if (key.empty()) throw InputError("override '" + o + "' has an empty key segment");
      if (dot == std::string::npos) {
        (*node)[key] = parsed;
        break;
      }
      json& next = (*node)[key];
      if (next.is_null()) next = json::object();
      if (!next.is_object()) throw InputError("override '" + o + "' descends into a non-object");
      node = &next;
      start = dot + 1;
    }
  }
  return j.dump();
}

}  // namespace avatarforge
