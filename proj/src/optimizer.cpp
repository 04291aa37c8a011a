#include "avatarforge/optimizer.hpp"

#include <cmath>
#include <vector>

namespace avatarforge {

namespace {

struct Span {
  double* data;
  size_t count;
};

std::vector<Span> spans(FieldParams& p) {
  std::vector<Span> out;
  p.for_each_tensor([&](const std::string&, double* data, size_t count, const std::vector<uint64_t>&) {
    out.push_back({data, count});
  });
  return out;
}

}  // namespace

Adam::Adam(const FieldParams& shape_like, AdamConfig config)
    : config_(config), m_(shape_like.zeros_like()), v_(shape_like.zeros_like()) {
  if (!(config_.lr > 0.0)) throw InputError("learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0))
    throw InputError("Adam betas must lie in [0, 1)");
}

void Adam::restore(FieldParams m, FieldParams v, int64_t steps) {
  if (!m.same_shape(v)) throw InputError("optimizer moments have different shapes");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

Adam::StepInfo Adam::step(FieldParams* params, FieldParams* grad) {
  if (!params->same_shape(*grad) || !params->same_shape(m_)) throw InputError("optimizer: parameter shapes differ");
  StepInfo info;
  info.grad_norm = std::sqrt(grad->squared_norm());
  if (!std::isfinite(info.grad_norm)) throw NumericError("non-finite gradient (norm " + std::to_string(info.grad_norm) + ")");
  if (config_.clip_norm > 0.0 && info.grad_norm > config_.clip_norm) {
    info.clip_scale = config_.clip_norm / info.grad_norm;
    grad->scale(info.clip_scale);
  }

  const int64_t t = t_ + 1;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));
  const std::vector<Span> p = spans(*params), g = spans(*grad), m = spans(m_), v = spans(v_);

  // Staged: the state is written only when every value is finite.
  std::vector<std::vector<double>> np(p.size()), nm(p.size()), nv(p.size());
  for (size_t k = 0; k < p.size(); ++k) {
    np[k].resize(p[k].count);
    nm[k].resize(p[k].count);
    nv[k].resize(p[k].count);
    for (size_t i = 0; i < p[k].count; ++i) {
      const double gi = g[k].data[i];
      const double mi = config_.beta1 * m[k].data[i] + (1.0 - config_.beta1) * gi;
      const double vi = config_.beta2 * v[k].data[i] + (1.0 - config_.beta2) * gi * gi;
      const double step = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
      nm[k][i] = mi;
      nv[k][i] = vi;
      np[k][i] = p[k].data[i] - step;
      if (!std::isfinite(np[k][i])) throw NumericError("non-finite parameter after the update");
    }
  }
  for (size_t k = 0; k < p.size(); ++k)
    for (size_t i = 0; i < p[k].count; ++i) {
      p[k].data[i] = np[k][i];
      m[k].data[i] = nm[k][i];
      v[k].data[i] = nv[k][i];
    }
  t_ = t;
  return info;
}

}  // namespace avatarforge
