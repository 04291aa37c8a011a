#include "avatarforge/render.hpp"

#include "avatarforge/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace avatarforge {

namespace {

constexpr int kSegment = 16;          // samples per ray evaluated per marching round
constexpr int kBackwardBatch = 1024;  // samples per re-evaluation batch

// Copies the listed (batch points, column) entries into one point set.
PreparedPoints gather(const std::vector<std::pair<const PreparedPoints*, int>>& from) {
  PreparedPoints p;
  const auto n = static_cast<Eigen::Index>(from.size());
  const bool observation = n > 0 && !from.front().first->vertex.empty();
  p.x.resize(3, n);
  p.prior.resize(n);
  p.prior_gradient.resize(3, n);
  p.x_lbs.resize(3, n);
  if (observation) p.vertex.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const PreparedPoints& src = *from[k].first;
    const int i = from[k].second;
    p.x.col(k) = src.x.col(i);
    p.prior[k] = src.prior[i];
    p.prior_gradient.col(k) = src.prior_gradient.col(i);
    p.x_lbs.col(k) = src.x_lbs.col(i);
    if (observation) p.vertex[k] = src.vertex[i];
  }
  return p;
}

}  // namespace

LatentImage LatentImage::zeros(int width, int height, Space space) {
  LatentImage img;
  img.width = width;
  img.height = height;
  img.space = space;
  img.features = Latent::Zero(4, static_cast<Eigen::Index>(width) * height);
  img.opacity = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width) * height);
  return img;
}

RayComposite composite_ray(int n, const double* sigma, const double* delta, const double* colors, const Vec4& background,
                           double early_stop, double* weights) {
  RayComposite r;
  if (weights) std::fill(weights, weights + n, 0.0);
  double T = 1.0, A = 0.0;
  int i = 0;
  for (; i < n; ++i) {
    if (T < early_stop) break;
    const double next = T * std::exp(-sigma[i] * delta[i]);
    const double a_next = std::max(A, 1.0 - next);
    // W_i = A_{i+1} − A_i rounded toward zero, so Σ W_i ≤ A ≤ 1 holds exactly.
    double w = a_next - A;
    if ((w - a_next) + A > 0.0) w = std::nextafter(w, 0.0);
    if (weights) weights[i] = w;
    r.color += w * Eigen::Map<const Vec4>(colors + 4 * i);
    T = next;
    A = a_next;
  }
  r.used = i;
  r.transmittance = T;
  r.opacity = A;
  r.color += T * background;
  return r;
}

void composite_ray_backward(int n, const double* sigma, const double* delta, const double* colors, const Vec4& background,
                            const Vec4& g, double* dsigma, double* dcolors, Vec4* dbackground) {
  // T[k] before sample k; T[n] is what the background sees.
  std::vector<double> T(n + 1);
  T[0] = 1.0;
  for (int k = 0; k < n; ++k) T[k + 1] = T[k] * std::exp(-sigma[k] * delta[k]);
  const double bg_term = T[n] * background.dot(g);
  double suffix = 0.0;  // Σ_{i>k} W_i (c_i·g)
  for (int k = n - 1; k >= 0; --k) {
    const Eigen::Map<const Vec4> c(colors + 4 * k);
    const double cg = c.dot(g);
    const double w = T[k] - T[k + 1];
    Eigen::Map<Vec4>(dcolors + 4 * k) = w * g;
    dsigma[k] = delta[k] * (T[k + 1] * cg - suffix - bg_term);
    suffix += w * cg;
  }
  if (dbackground) *dbackground = T[n] * g;
}

void ray_samples(double t0, double t1, int n, const double* jitter, double* t, double* delta) {
  const double step = (t1 - t0) / n;
  for (int i = 0; i < n; ++i) t[i] = t0 + (i + (jitter ? jitter[i] : 0.5)) * step;
  for (int i = 0; i + 1 < n; ++i) delta[i] = t[i + 1] - t[i];
  delta[n - 1] = n > 1 ? delta[n - 2] : step;
}

LatentImage RenderTape::forward(const FieldParams& params, const SpaceContext& context, const Camera& camera,
                                const RenderConfig& config, Rng* rng) {
  return run_forward(params, context, camera, config, rng, true);
}

LatentImage RenderTape::run_forward(const FieldParams& params, const SpaceContext& context, const Camera& camera,
                                    const RenderConfig& config, Rng* rng, bool keep) {
  if (config.samples_per_ray < 1 || config.rays_per_chunk < 1) throw InputError("render needs positive sample and chunk counts");
  if (config.stratified && !rng) throw InputError("stratified sampling needs a random stream");
  params_ = &params;
  context_ = &context;
  camera_ = camera;
  config_ = config;
  LatentImage image = LatentImage::zeros(camera.width, camera.height, context.space);
  const int P = image.pixels();
  const int S = config.samples_per_ray;
  std::vector<double> jitter;
  if (config.stratified) {
    jitter.resize(static_cast<size_t>(P) * S);
    for (double& j : jitter) j = rng->uniform();
  }
  const int n_chunks = (P + config.rays_per_chunk - 1) / config.rays_per_chunk;
  chunks_.clear();
  chunks_.resize(n_chunks);
  parallel_for(n_chunks, config.threads,
               [&](int c) { forward_chunk(c, jitter.empty() ? nullptr : jitter.data(), keep, image); });
  return image;
}

void RenderTape::forward_chunk(int chunk_id, const double* jitter, bool keep, LatentImage& image) {
  Chunk& chunk = chunks_[chunk_id];
  const int S = config_.samples_per_ray;
  const int P = image.pixels();
  const int first = chunk_id * config_.rays_per_chunk;
  const int last = std::min(P, first + config_.rays_per_chunk);

  struct RayState {
    std::vector<double> t, delta;
    Vec3 origin, direction;
    int next = 0;
    double T = 1.0;
    Vec4 color = Vec4::Zero();
    bool active = false;
  };
  std::vector<RayState> rays(last - first);
  chunk.directions.resize(3, last - first);
  for (int p = first; p < last; ++p) {
    chunk.rays.push_back(p);
    RayState& st = rays[p - first];
    const Ray ray = camera_.ray(p % image.width, p / image.width);
    chunk.directions.col(p - first) = ray.direction;
    st.origin = ray.origin;
    st.direction = ray.direction;
    const auto hit = intersect_scene_box(ray);
    if (!hit) continue;
    st.t.resize(S);
    st.delta.resize(S);
    ray_samples(hit->first, hit->second, S, jitter ? jitter + static_cast<size_t>(p) * S : nullptr, st.t.data(),
                st.delta.data());
    st.active = true;
  }
  chunk.ray_samples.assign(rays.size(), {});

  std::vector<double> kept_sigma, kept_delta;
  std::vector<Vec4> kept_color;
  for (;;) {
    std::vector<std::pair<int, int>> owners;  // (ray, sample index)
    for (int r = 0; r < static_cast<int>(rays.size()); ++r) {
      const RayState& st = rays[r];
      if (!st.active) continue;
      for (int i = st.next; i < std::min(S, st.next + kSegment); ++i) owners.emplace_back(r, i);
    }
    if (owners.empty()) break;
    Points3 pts(3, static_cast<Eigen::Index>(owners.size()));
    for (size_t k = 0; k < owners.size(); ++k) {
      const auto [r, i] = owners[k];
      pts.col(k) = rays[r].origin + rays[r].t[i] * rays[r].direction;
    }
    auto batch = std::make_unique<Batch>();
    batch->points = prepare_points(*context_, pts);
    const FieldOutputs out = batch->tape.forward(*params_, *context_, batch->points);
    batch->sample.assign(owners.size(), -1);
    const int batch_id = static_cast<int>(chunk.batches.size());
    for (size_t k = 0; k < owners.size(); ++k) {
      const auto [r, i] = owners[k];
      RayState& st = rays[r];
      if (!st.active) continue;
      if (st.T < config_.early_stop) {
        st.active = false;
        continue;
      }
      const double sigma = out.sigma[k];
      const double decay = std::exp(-sigma * st.delta[i]);
      const double w = st.T * (1.0 - decay);
      const Vec4 c = out.color.col(k);
      st.color += w * c;
      st.T *= decay;
      st.next = i + 1;
      if (st.next >= S) st.active = false;
      if (!keep) continue;
      const int id = static_cast<int>(kept_sigma.size());
      chunk.ray_samples[r].push_back(id);
      chunk.origin.emplace_back(batch_id, static_cast<int>(k));
      batch->sample[k] = id;
      kept_sigma.push_back(sigma);
      kept_delta.push_back(st.delta[i]);
      kept_color.push_back(c);
    }
    if (keep) chunk.batches.push_back(std::move(batch));
  }
  const auto n = static_cast<Eigen::Index>(kept_sigma.size());
  chunk.sigma = Eigen::Map<const Eigen::VectorXd>(kept_sigma.data(), n);
  chunk.delta = Eigen::Map<const Eigen::VectorXd>(kept_delta.data(), n);
  chunk.color.resize(4, n);
  for (Eigen::Index i = 0; i < n; ++i) chunk.color.col(i) = kept_color[i];

  if (config_.background) {
    BackgroundTape bg;
    chunk.background = bg.forward(*params_, chunk.directions);
  } else {
    chunk.background = Latent::Zero(4, chunk.directions.cols());
  }
  for (int p = first; p < last; ++p) {
    const RayState& st = rays[p - first];
    image.features.col(p) = st.color + st.T * chunk.background.col(p - first);
    image.opacity[p] = 1.0 - st.T;
  }
}

size_t RenderTape::sample_count() const {
  size_t n = 0;
  for (const auto& c : chunks_) n += static_cast<size_t>(c.sigma.size());
  return n;
}

size_t RenderTape::count_dense_samples(double threshold) const {
  size_t n = 0;
  for (const auto& c : chunks_)
    for (Eigen::Index i = 0; i < c.sigma.size(); ++i) n += c.sigma[i] > threshold;
  return n;
}

RenderTape::Result RenderTape::backward(const Latent& dpixel, double pixel_scale, const NormalLossTerm* normal,
                                        FieldParams* grad) const {
  if (dpixel.cols() > 0 && dpixel.cols() != camera_.width * camera_.height)
    throw InputError("dimension mismatch: pixel gradient does not match the render");
  const int n_chunks = static_cast<int>(chunks_.size());
  const int lanes = std::min(kGradientLanes, std::max(1, n_chunks));
  std::vector<FieldParams> lane_grad(lanes, grad->zeros_like());
  std::vector<Result> chunk_result(n_chunks);
  parallel_for(lanes, config_.threads, [&](int lane) {
    for (int c = lane; c < n_chunks; c += lanes)
      backward_chunk(chunks_[c], dpixel, pixel_scale, normal, &lane_grad[lane], &chunk_result[c]);
  });
  for (const auto& g : lane_grad) grad->add_scaled(g, 1.0);
  Result total;
  for (const auto& r : chunk_result) {
    total.normal_sum += r.normal_sum;
    total.normal_count += r.normal_count;
  }
  return total;
}

void RenderTape::backward_chunk(const Chunk& chunk, const Latent& dpixel, double pixel_scale, const NormalLossTerm* normal,
                                FieldParams* grad, Result* result) const {
  const auto n = chunk.sigma.size();
  const bool any_pixel = dpixel.cols() > 0 && pixel_scale != 0.0;
  if (any_pixel) {
    Eigen::VectorXd dsigma = Eigen::VectorXd::Zero(n);
    Latent dcolor = Latent::Zero(4, n);
    Latent dbg = Latent::Zero(4, chunk.directions.cols());
    std::vector<double> s, d, c, ds, dc;
    for (size_t r = 0; r < chunk.rays.size(); ++r) {
      const Vec4 g = pixel_scale * dpixel.col(chunk.rays[r]);
      const auto& ids = chunk.ray_samples[r];
      const int m = static_cast<int>(ids.size());
      s.resize(m);
      d.resize(m);
      c.resize(4 * m);
      ds.resize(m);
      dc.resize(4 * m);
      for (int k = 0; k < m; ++k) {
        s[k] = chunk.sigma[ids[k]];
        d[k] = chunk.delta[ids[k]];
        Eigen::Map<Vec4>(c.data() + 4 * k) = chunk.color.col(ids[k]);
      }
      Vec4 db;
      composite_ray_backward(m, s.data(), d.data(), c.data(), chunk.background.col(r), g, ds.data(), dc.data(), &db);
      for (int k = 0; k < m; ++k) {
        dsigma[ids[k]] = ds[k];
        dcolor.col(ids[k]) = Eigen::Map<const Vec4>(dc.data() + 4 * k);
      }
      dbg.col(r) = db;
    }
    for (const auto& batch : chunk.batches) {
      const auto m = static_cast<Eigen::Index>(batch->sample.size());
      Eigen::VectorXd bs = Eigen::VectorXd::Zero(m);
      Latent bc = Latent::Zero(4, m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const int id = batch->sample[k];
        if (id < 0) continue;
        bs[k] = dsigma[id];
        bc.col(k) = dcolor.col(id);
      }
      batch->tape.backward(bs, bc, Points3(), grad);
    }
    if (config_.background) {
      BackgroundTape bg;
      bg.forward(*params_, chunk.directions);
      bg.backward(*params_, dbg, grad);
    }
  }

  if (!normal || normal->weight == 0.0) return;
  // The normal term only touches the dense samples; they are re-evaluated in
  // small batches so their density gradients can be formed.
  std::vector<std::pair<const PreparedPoints*, int>> dense;
  for (Eigen::Index i = 0; i < n; ++i)
    if (chunk.sigma[i] > normal->threshold) {
      const auto [b, col] = chunk.origin[i];
      dense.emplace_back(&chunk.batches[b]->points, col);
    }
  for (size_t begin = 0; begin < dense.size(); begin += kBackwardBatch) {
    const std::vector<std::pair<const PreparedPoints*, int>> part(
        dense.begin() + static_cast<std::ptrdiff_t>(begin),
        dense.begin() + static_cast<std::ptrdiff_t>(std::min(dense.size(), begin + kBackwardBatch)));
    const PreparedPoints pts = gather(part);
    const auto m = static_cast<Eigen::Index>(part.size());
    FieldTape tape;
    const FieldOutputs out = tape.forward(*params_, *context_, pts);
    const Points3 grad_sigma = normal->mode == GradientMode::kAnalytic
                                   ? tape.density_gradient()
                                   : density_gradients(*params_, *context_, pts, normal->mode);
    Eigen::VectorXd ds(m);
    Points3 dn(3, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      double sg;
      Vec3 v;
      result->normal_sum += normal_term(out.sigma[k], out.normal.col(k), grad_sigma.col(k), &sg, &v);
      ds[k] = normal->weight * sg;
      dn.col(k) = normal->weight * v;
    }
    result->normal_count += static_cast<size_t>(m);
    tape.backward(ds, Latent(), dn, grad);
  }
}

LatentImage render_rays(const FieldParams& params, const SpaceContext& context, const Camera& camera,
                        const RenderConfig& config, Rng* rng) {
  RenderTape tape;
  return tape.run_forward(params, context, camera, config, rng, false);
}

Eigen::VectorXd render_silhouette(const SpaceContext& context, const Camera& camera, int samples_per_ray, int threads) {
  const int P = camera.width * camera.height;
  Eigen::VectorXd opacity = Eigen::VectorXd::Zero(P);
  const int rows = camera.height;
  parallel_for(rows, threads, [&](int y) {
    std::vector<double> t(samples_per_ray), delta(samples_per_ray);
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = camera.ray(x, y);
      const auto hit = intersect_scene_box(ray);
      if (!hit) continue;
      ray_samples(hit->first, hit->second, samples_per_ray, nullptr, t.data(), delta.data());
      double T = 1.0;
      for (int i = 0; i < samples_per_ray && T >= 1e-6; ++i)
        T *= std::exp(-context.prior_density(ray.origin + t[i] * ray.direction) * delta[i]);
      opacity[y * camera.width + x] = 1.0 - T;
    }
  });
  return opacity;
}

}  // namespace avatarforge
