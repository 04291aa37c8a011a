#include "avatarforge/field_params.hpp"

#include "avatarforge/rng.hpp"

#include <cmath>

namespace avatarforge {

namespace {

void he_init(DenseLayer& layer, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(layer.weight.cols()));
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = stddev * rng.normal();
  layer.bias.setZero();
}

}  // namespace

FieldParams FieldParams::zeros(const GridConfig& grid) {
  FieldParams p;
  p.grid_config = grid;
  const GridEncoder enc(grid);
  const int width = enc.output_dim();
  p.grid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(enc.parameter_count()));
  p.main = Mlp({width, 64, 64, 3 + 1 + kLatentChannels});
  p.nonrigid = Mlp({width, 64, 64, 3});
  p.background = Mlp({kBackgroundInputs, 32, kLatentChannels});
  return p;
}

FieldParams FieldParams::initialize(const GridConfig& grid, uint64_t seed) {
  FieldParams p = zeros(grid);
  Rng rng(Rng::derive_seed(seed, 0x6669656c64ULL));
  for (Eigen::Index i = 0; i < p.grid.size(); ++i) p.grid[i] = rng.uniform(-1e-4, 1e-4);
  for (auto* mlp : {&p.main, &p.nonrigid, &p.background})
    for (size_t i = 0; i + 1 < mlp->layers.size(); ++i) he_init(mlp->layers[i], rng);
  // Main output: normal and latent rows random, density row zero.
  auto& out = p.main.layers.back();
  const double stddev = std::sqrt(1.0 / static_cast<double>(out.weight.cols()));
  for (Eigen::Index r = 0; r < out.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < out.weight.cols(); ++c)
      out.weight(r, c) = r == kDensityRow ? 0.0 : stddev * rng.normal();
  out.bias.setZero();
  return p;
}

size_t FieldParams::parameter_count() const {
  size_t n = 0;
  for_each_tensor([&](const std::string&, const double*, size_t count, const std::vector<uint64_t>&) { n += count; });
  return n;
}

void FieldParams::set_zero() {
  for_each_tensor([](const std::string&, double* d, size_t n, const std::vector<uint64_t>&) { std::fill(d, d + n, 0.0); });
}

void FieldParams::add_scaled(const FieldParams& other, double s) {
  std::vector<const double*> src;
  other.for_each_tensor([&](const std::string&, const double* d, size_t, const std::vector<uint64_t>&) { src.push_back(d); });
  size_t t = 0;
  for_each_tensor([&](const std::string&, double* d, size_t n, const std::vector<uint64_t>&) {
    const double* o = src[t++];
    for (size_t i = 0; i < n; ++i) d[i] += s * o[i];
  });
}

void FieldParams::scale(double s) {
  for_each_tensor([&](const std::string&, double* d, size_t n, const std::vector<uint64_t>&) {
    for (size_t i = 0; i < n; ++i) d[i] *= s;
  });
}

double FieldParams::squared_norm() const {
  double acc = 0.0;
  for_each_tensor([&](const std::string&, const double* d, size_t n, const std::vector<uint64_t>&) {
    for (size_t i = 0; i < n; ++i) acc += d[i] * d[i];
  });
  return acc;
}

bool FieldParams::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const std::string&, const double* d, size_t n, const std::vector<uint64_t>&) {
    for (size_t i = 0; i < n && ok; ++i) ok = std::isfinite(d[i]);
  });
  return ok;
}

bool FieldParams::same_shape(const FieldParams& other) const {
  std::vector<std::vector<uint64_t>> a, b;
  for_each_tensor([&](const std::string&, const double*, size_t, const std::vector<uint64_t>& s) { a.push_back(s); });
  other.for_each_tensor([&](const std::string&, const double*, size_t, const std::vector<uint64_t>& s) { b.push_back(s); });
  return a == b;
}

}  // namespace avatarforge
