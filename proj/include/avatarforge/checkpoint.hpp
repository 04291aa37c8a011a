#pragma once

#include "avatarforge/field_params.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace avatarforge {

// Everything needed to continue a run bit for bit: parameters, Adam
// moments, the step counter, the config echo and every rng stream.
struct Checkpoint {
  int64_t step = 0;
  FieldParams params;
  std::optional<FieldParams> adam_m, adam_v;  // absent before the first update
  int64_t adam_steps = 0;
  std::string config_json;
  std::map<std::string, std::string> rng_states;
};

// AVCK container, f64 tensors "param/<name>", "adam_m/<name>", "adam_v/<name>".
// Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace avatarforge
