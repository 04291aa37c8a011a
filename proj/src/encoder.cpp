#include "avatarforge/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace avatarforge {

GridEncoder::GridEncoder(const GridConfig& c) : config_(c) {
  if (c.levels < 1 || c.features_per_level < 1 || c.base_resolution < 1 || c.max_resolution < c.base_resolution ||
      c.log2_table_size < 1 || c.log2_table_size > 30)
    throw InputError("invalid grid encoder configuration");
  const double growth =
      c.levels > 1 ? std::exp((std::log(c.max_resolution) - std::log(c.base_resolution)) / (c.levels - 1)) : 1.0;
  const size_t table = size_t{1} << c.log2_table_size;
  for (int l = 0; l < c.levels; ++l) {
    Level lv;
    lv.resolution = static_cast<int>(std::floor(c.base_resolution * std::pow(growth, l) + 1e-6));
    const size_t nodes = static_cast<size_t>(lv.resolution + 1) * (lv.resolution + 1) * (lv.resolution + 1);
    lv.dense = nodes <= table;
    lv.entries = lv.dense ? nodes : table;
    lv.offset = total_;
    const auto n = static_cast<uint32_t>(lv.resolution + 1);
    lv.stride[0] = 1;
    lv.stride[1] = n;
    lv.stride[2] = n * n;
    lv.mask = static_cast<uint32_t>(lv.entries - 1);
    total_ += lv.entries * c.features_per_level;
    levels_.push_back(lv);
  }
}

uint32_t GridEncoder::entry(int level, uint32_t i, uint32_t j, uint32_t k) const {
  const Level& lv = levels_[level];
  if (lv.dense) {
    const auto n = static_cast<uint32_t>(lv.resolution + 1);
    return i + n * (j + n * k);
  }
  return (i * 1u ^ j * 2654435761u ^ k * 805459861u) & static_cast<uint32_t>(lv.entries - 1);
}

GridEncoder::Unit GridEncoder::to_unit(const Vec3& x) {
  Unit r;
  for (int a = 0; a < 3; ++a) {
    const double u = 0.5 * (x[a] + 1.0);
    r.clamped[a] = u <= 0.0 || u >= 1.0;
    r.u[a] = r.clamped[a] ? std::clamp(u, 0.0, 1.0) : u;
  }
  return r;
}

GridEncoder::Cell GridEncoder::locate(int level, const Unit& unit) const {
  const Level& lv = levels_[level];
  const int res = lv.resolution;
  Cell cell;
  uint32_t base[3];
  for (int a = 0; a < 3; ++a) {
    const double pos = unit.u[a] * res;
    const int i0 = std::min(static_cast<int>(pos), res - 1);
    base[a] = static_cast<uint32_t>(i0);
    cell.w[a] = pos - i0;
  }
  if (lv.dense) {
    const uint32_t b = base[0] + lv.stride[1] * base[1] + lv.stride[2] * base[2];
    for (int c = 0; c < 8; ++c)
      cell.corner[c] = b + (c & 1) + ((c >> 1) & 1) * lv.stride[1] + ((c >> 2) & 1) * lv.stride[2];
  } else {
    const uint32_t hx[2] = {base[0], base[0] + 1};
    const uint32_t hy[2] = {base[1] * 2654435761u, (base[1] + 1) * 2654435761u};
    const uint32_t hz[2] = {base[2] * 805459861u, (base[2] + 1) * 805459861u};
    for (int c = 0; c < 8; ++c) cell.corner[c] = (hx[c & 1] ^ hy[(c >> 1) & 1] ^ hz[(c >> 2) & 1]) & lv.mask;
  }
  return cell;
}

namespace {

// Trilinear corner weights, corner c = (c&1, c>>1&1, c>>2&1).
inline void corner_weights(const double* f, double* w) {
  const double x[2] = {1.0 - f[0], f[0]}, y[2] = {1.0 - f[1], f[1]}, z[2] = {1.0 - f[2], f[2]};
  for (int c = 0; c < 8; ++c) w[c] = x[c & 1] * y[(c >> 1) & 1] * z[(c >> 2) & 1];
}

}  // namespace

void GridEncoder::encode(const double* grid, const Vec3& x, double* out) const {
  const int F = config_.features_per_level;
  const Unit unit = to_unit(x);
  for (int l = 0; l < config_.levels; ++l) {
    const Cell cell = locate(l, unit);
    const double* table = grid + levels_[l].offset;
    double w[8];
    corner_weights(cell.w, w);
    if (F == 2) {
      double a0 = 0.0, a1 = 0.0;
      for (int c = 0; c < 8; ++c) {
        const double* v = table + 2 * static_cast<size_t>(cell.corner[c]);
        a0 += w[c] * v[0];
        a1 += w[c] * v[1];
      }
      out[2 * l] = a0;
      out[2 * l + 1] = a1;
      continue;
    }
    for (int f = 0; f < F; ++f) out[l * F + f] = 0.0;
    for (int c = 0; c < 8; ++c) {
      const double* v = table + static_cast<size_t>(cell.corner[c]) * F;
      for (int f = 0; f < F; ++f) out[l * F + f] += w[c] * v[f];
    }
  }
}

void GridEncoder::backward(const double* grid, const Vec3& x, const double* dout, double* dgrid, Vec3* dx) const {
  const int F = config_.features_per_level;
  const Unit unit = to_unit(x);
  double g[3] = {0.0, 0.0, 0.0};
  for (int l = 0; l < config_.levels; ++l) {
    const Cell cell = locate(l, unit);
    const size_t off = levels_[l].offset;
    const double* d = dout + l * F;
    if (dgrid) {
      double w[8];
      corner_weights(cell.w, w);
      for (int c = 0; c < 8; ++c) {
        double* t = dgrid + off + static_cast<size_t>(cell.corner[c]) * F;
        for (int f = 0; f < F; ++f) t[f] += w[c] * d[f];
      }
    }
    if (dx) {
      // vd[c] = ⟨table[c], dout⟩; the trilinear derivative along each axis
      // differences the two faces of the cell.
      double vd[8];
      for (int c = 0; c < 8; ++c) {
        const double* v = grid + off + static_cast<size_t>(cell.corner[c]) * F;
        double acc = 0.0;
        for (int f = 0; f < F; ++f) acc += v[f] * d[f];
        vd[c] = acc;
      }
      const double* f = cell.w;
      const double x[2] = {1.0 - f[0], f[0]}, y[2] = {1.0 - f[1], f[1]}, z[2] = {1.0 - f[2], f[2]};
      double gx = 0.0, gy = 0.0, gz = 0.0;
      for (int c = 0; c < 8; ++c) {
        const int bx = c & 1, by = (c >> 1) & 1, bz = (c >> 2) & 1;
        gx += (bx ? vd[c] : -vd[c]) * y[by] * z[bz];
        gy += (by ? vd[c] : -vd[c]) * x[bx] * z[bz];
        gz += (bz ? vd[c] : -vd[c]) * x[bx] * y[by];
      }
      const double half = 0.5 * levels_[l].resolution;
      g[0] += gx * half;
      g[1] += gy * half;
      g[2] += gz * half;
    }
  }
  if (dx) {
    for (int a = 0; a < 3; ++a)
      if (unit.clamped[a]) g[a] = 0.0;
    *dx = Vec3(g[0], g[1], g[2]);
  }
}

}  // namespace avatarforge
