#pragma once

#include "avatarforge/common.hpp"

#include <cstddef>
#include <vector>

namespace avatarforge {

struct GridConfig {
  int levels = 16;
  int features_per_level = 2;
  int base_resolution = 16;
  int max_resolution = 512;
  int log2_table_size = 14;

  bool operator==(const GridConfig&) const = default;
};

// Multiresolution trilinear feature grid over [-1,1]^3. Coarse levels whose
// lattice fits the table are indexed densely, finer levels through a spatial
// hash. Parameters live in one flat array owned by the caller.
class GridEncoder {
 public:
  explicit GridEncoder(const GridConfig& config);

  const GridConfig& config() const { return config_; }
  int output_dim() const { return config_.levels * config_.features_per_level; }
  size_t parameter_count() const { return total_; }
  int resolution(int level) const { return levels_[level].resolution; }
  bool dense(int level) const { return levels_[level].dense; }
  size_t level_offset(int level) const { return levels_[level].offset; }
  size_t level_entries(int level) const { return levels_[level].entries; }
  // Table entry of lattice node (i, j, k) within a level.
  uint32_t entry(int level, uint32_t i, uint32_t j, uint32_t k) const;

  void encode(const double* grid, const Vec3& x, double* out) const;
  // Accumulates dL/dgrid (when dgrid is non-null) and writes dL/dx (when dx
  // is non-null) for upstream dL/dout. Clamped axes have zero x-derivative.
  void backward(const double* grid, const Vec3& x, const double* dout, double* dgrid, Vec3* dx) const;

 private:
  struct Level {
    int resolution;
    bool dense;
    size_t offset;
    size_t entries;
    uint32_t stride[3];  // dense: node index step per axis
    uint32_t mask;       // hashed: table size − 1
  };
  struct Cell {
    uint32_t corner[8];
    double w[3];  // fractional position within the cell
  };
  // Position in [0,1]³ with clamped axes marked.
  struct Unit {
    double u[3];
    bool clamped[3];
  };
  static Unit to_unit(const Vec3& x);
  Cell locate(int level, const Unit& u) const;

  GridConfig config_;
  std::vector<Level> levels_;
  size_t total_ = 0;
};

}  // namespace avatarforge
