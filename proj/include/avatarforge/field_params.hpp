#pragma once

#include "avatarforge/encoder.hpp"
#include "avatarforge/mlp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace avatarforge {

inline constexpr int kLatentChannels = 4;
// Main network output layout: normal [0,3), density [3], latent [4,8).
inline constexpr int kNormalRow = 0;
inline constexpr int kDensityRow = 3;
inline constexpr int kLatentRow = 4;
inline constexpr int kBackgroundOctaves = 4;
inline constexpr int kBackgroundInputs = 3 + 6 * kBackgroundOctaves;

// Every trainable parameter of the field. Also used as the gradient and
// optimizer-moment container (same shapes).
struct FieldParams {
  GridConfig grid_config;
  Eigen::VectorXd grid;  // encoder feature tables
  Mlp main;              // γ(x) → (n, σ residual, c)
  Mlp nonrigid;          // γ(x_lbs) → corrective offset
  Mlp background;        // enc(direction) → background latent

  // Architecture with every parameter zero.
  static FieldParams zeros(const GridConfig& grid);
  // Grid U[-1e-4, 1e-4]; He-normal hidden layers; main density row, the
  // non-rigid output layer and the background output layer start at zero.
  static FieldParams initialize(const GridConfig& grid, uint64_t seed);
  FieldParams zeros_like() const { return zeros(grid_config); }
  GridEncoder encoder() const { return GridEncoder(grid_config); }

  // Visits every tensor in a fixed order: f(name, data, count, shape).
  template <typename F>
  void for_each_tensor(F&& f);
  template <typename F>
  void for_each_tensor(F&& f) const;

  size_t parameter_count() const;
  void set_zero();
  // this += s * other
  void add_scaled(const FieldParams& other, double s);
  void scale(double s);
  double squared_norm() const;
  bool all_finite() const;
  bool same_shape(const FieldParams& other) const;
};

namespace detail {
template <typename P, typename F>
void visit_tensors(P& p, F&& f) {
  f(std::string("grid"), p.grid.data(), static_cast<size_t>(p.grid.size()),
    std::vector<uint64_t>{static_cast<uint64_t>(p.grid.size())});
  auto visit_mlp = [&](const char* prefix, auto& mlp) {
    for (size_t i = 0; i < mlp.layers.size(); ++i) {
      auto& l = mlp.layers[i];
      const std::string base = std::string(prefix) + "." + std::to_string(i);
      f(base + ".weight", l.weight.data(), static_cast<size_t>(l.weight.size()),
        std::vector<uint64_t>{static_cast<uint64_t>(l.weight.rows()), static_cast<uint64_t>(l.weight.cols())});
      f(base + ".bias", l.bias.data(), static_cast<size_t>(l.bias.size()),
        std::vector<uint64_t>{static_cast<uint64_t>(l.bias.size())});
    }
  };
  visit_mlp("main", p.main);
  visit_mlp("nonrigid", p.nonrigid);
  visit_mlp("background", p.background);
}
}  // namespace detail

template <typename F>
void FieldParams::for_each_tensor(F&& f) {
  detail::visit_tensors(*this, f);
}
template <typename F>
void FieldParams::for_each_tensor(F&& f) const {
  detail::visit_tensors(*this, f);
}

}  // namespace avatarforge
