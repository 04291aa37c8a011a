#include "avatarforge/checkpoint.hpp"

#include "avatarforge/binio.hpp"

#include <json.hpp>

namespace avatarforge {

using nlohmann::json;

namespace {

constexpr uint32_t kVersion = 1;

void add_tensors(const FieldParams& p, const std::string& prefix, TensorFile* file) {
  p.for_each_tensor([&](const std::string& name, const double* data, size_t count, const std::vector<uint64_t>& shape) {
    file->tensors.push_back({prefix + name, shape, std::vector<double>(data, data + count)});
  });
}

FieldParams read_tensors(const TensorFile& file, const std::string& prefix, const GridConfig& grid) {
  FieldParams p = FieldParams::zeros(grid);
  p.for_each_tensor([&](const std::string& name, double* data, size_t count, const std::vector<uint64_t>& shape) {
    const Tensor& t = file.get(prefix + name);
    if (t.shape != shape) throw InputError("checkpoint tensor '" + prefix + name + "' has the wrong shape");
    if (t.dtype() != DType::kF64) throw InputError("checkpoint tensor '" + prefix + name + "' is not f64");
    const auto& v = std::get<std::vector<double>>(t.data);
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(count), data);
  });
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (ck.adam_m.has_value() != ck.adam_v.has_value()) throw InputError("checkpoint needs both Adam moments or neither");
  TensorFile file;
  file.magic = "AVCK";
  file.version = kVersion;
  const GridConfig& g = ck.params.grid_config;
  json meta{{"step", ck.step},
            {"adam_steps", ck.adam_steps},
            {"has_moments", ck.adam_m.has_value()},
            {"grid",
             {{"levels", g.levels},
              {"features_per_level", g.features_per_level},
              {"base_resolution", g.base_resolution},
              {"max_resolution", g.max_resolution},
              {"log2_table_size", g.log2_table_size}}},
            {"rng", ck.rng_states}};
  json config = json::parse(ck.config_json, nullptr, false);
  meta["config"] = config.is_discarded() ? json(ck.config_json) : config;
  file.metadata = meta.dump();
  add_tensors(ck.params, "param/", &file);
  if (ck.adam_m) {
    add_tensors(*ck.adam_m, "adam_m/", &file);
    add_tensors(*ck.adam_v, "adam_v/", &file);
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_tensor_file(tmp, file);
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path, "AVCK");
  if (file.version != kVersion) throw InputError("unsupported checkpoint version " + std::to_string(file.version));
  const json meta = json::parse(file.metadata, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw InputError("checkpoint metadata is not JSON");
  Checkpoint ck;
  try {
    ck.step = meta.at("step").get<int64_t>();
    ck.adam_steps = meta.at("adam_steps").get<int64_t>();
    const json& g = meta.at("grid");
    GridConfig grid;
    grid.levels = g.at("levels").get<int>();
    grid.features_per_level = g.at("features_per_level").get<int>();
    grid.base_resolution = g.at("base_resolution").get<int>();
    grid.max_resolution = g.at("max_resolution").get<int>();
    grid.log2_table_size = g.at("log2_table_size").get<int>();
    ck.params = read_tensors(file, "param/", grid);
    if (meta.at("has_moments").get<bool>()) {
      ck.adam_m = read_tensors(file, "adam_m/", grid);
      ck.adam_v = read_tensors(file, "adam_v/", grid);
    }
    ck.rng_states = meta.at("rng").get<std::map<std::string, std::string>>();
    const json& config = meta.at("config");
    ck.config_json = config.is_string() ? config.get<std::string>() : config.dump();
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  return ck;
}

}  // namespace avatarforge
