#include "avatarforge/field.hpp"

#include <cmath>
#include <numbers>

namespace avatarforge {

const char* to_string(Space space) { return space == Space::kCanonical ? "canonical" : "observation"; }

Space space_from_string(const std::string& name) {
  if (name == "canonical") return Space::kCanonical;
  if (name == "observation") return Space::kObservation;
  throw InputError("unknown space '" + name + "' (expected canonical or observation)");
}

bool inside_scene_box(const Vec3& x, double margin) {
  return (x.array().abs() <= 1.0 - margin).all();
}

SpaceContext SpaceContext::canonical(const PosedBody& a_pose, double sharpness, bool prior_enabled) {
  SpaceContext c;
  c.space = Space::kCanonical;
  c.body = std::make_shared<const PosedBody>(a_pose);
  c.index = std::make_shared<const SpatialIndex>(a_pose.mesh());
  if (prior_enabled) c.prior = std::make_shared<const DensityPrior>(c.index, sharpness);
  return c;
}

SpaceContext SpaceContext::observation(const PosedBody& a_pose, const PosedBody& observed, double sharpness,
                                       bool prior_enabled) {
  SpaceContext c;
  c.space = Space::kObservation;
  c.body = std::make_shared<const PosedBody>(observed);
  c.index = std::make_shared<const SpatialIndex>(observed.mesh());
  if (prior_enabled) c.prior = std::make_shared<const DensityPrior>(c.index, sharpness);
  c.deformation = std::make_shared<const Deformation>(a_pose, observed, c.index);
  return c;
}

double SpaceContext::prior_density(const Vec3& x, Vec3* gradient) const {
  if (!prior) {
    if (gradient) gradient->setZero();
    return 0.0;
  }
  return prior->density(x, gradient);
}

namespace {

PreparedPoints prepare_common(const SpaceContext& context, const Points3& x) {
  PreparedPoints p;
  p.x = x;
  const Eigen::Index n = x.cols();
  if (context.space == Space::kObservation) {
    if (!context.deformation) throw InputError("observation space requires a deformation");
    p.x_lbs.resize(3, n);
    p.vertex.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = context.deformation->inverse_lbs(x.col(i));
      p.x_lbs.col(i) = r.x;
      p.vertex[i] = r.vertex;
    }
  } else {
    p.x_lbs = x;
  }
  return p;
}

}  // namespace

PreparedPoints prepare_points(const SpaceContext& context, const Points3& x) {
  PreparedPoints p = prepare_common(context, x);
  const Eigen::Index n = x.cols();
  p.prior.resize(n);
  p.prior_gradient.resize(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 g;
    p.prior[i] = context.prior_density(x.col(i), &g);
    p.prior_gradient.col(i) = g;
  }
  return p;
}

PreparedPoints prepare_points(const SpaceContext& context, const Points3& x, const Eigen::VectorXd& prior) {
  if (prior.size() != x.cols()) throw InputError("dimension mismatch: prior count differs from point count");
  PreparedPoints p = prepare_common(context, x);
  p.prior = prior;
  p.prior_gradient = Points3::Zero(3, x.cols());
  return p;
}

FieldOutputs FieldTape::forward(const FieldParams& params, const SpaceContext& context, const PreparedPoints& points) {
  params_ = &params;
  context_ = &context;
  points_ = &points;
  if (!encoder_ || !(encoder_->config() == params.grid_config)) encoder_.emplace(params.grid_config);
  const GridEncoder& enc = *encoder_;
  const Eigen::Index n = points.size();
  const int width = enc.output_dim();
  const double* grid = params.grid.data();

  if (context.space == Space::kObservation) {
    Eigen::MatrixXd nr_in(width, n);
    for (Eigen::Index i = 0; i < n; ++i) enc.encode(grid, points.x_lbs.col(i), nr_in.col(i).data());
    const Eigen::MatrixXd raw = params.nonrigid.forward(std::move(nr_in), &nr_cache_);
    x_hat_.resize(3, n);
    offset_jacobian_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      x_hat_.col(i) = points.x_lbs.col(i) + bound_offset(raw.col(i), &offset_jacobian_[i]);
  } else {
    x_hat_ = points.x_lbs;
    offset_jacobian_.clear();
  }

  Eigen::MatrixXd main_in(width, n);
  for (Eigen::Index i = 0; i < n; ++i) enc.encode(grid, x_hat_.col(i), main_in.col(i).data());
  const Eigen::MatrixXd out = params.main.forward(std::move(main_in), &main_cache_);

  FieldOutputs o;
  pre_clamp_ = out.row(kDensityRow).transpose() + points.prior;
  o.sigma = pre_clamp_.cwiseMax(0.0);
  o.normal = out.middleRows(kNormalRow, 3);
  o.color = out.middleRows(kLatentRow, kLatentChannels);
  return o;
}

void FieldTape::backward(const Eigen::VectorXd& dsigma, const Latent& dcolor, const Points3& dnormal,
                         FieldParams* grad) const {
  const GridEncoder& enc = *encoder_;
  const Eigen::Index n = points_->size();
  const bool observation = context_->space == Space::kObservation;
  Eigen::MatrixXd dout = Eigen::MatrixXd::Zero(params_->main.output_dim(), n);
  if (dsigma.size() > 0)
    for (Eigen::Index i = 0; i < n; ++i)
      dout(kDensityRow, i) = pre_clamp_[i] >= 0.0 ? dsigma[i] : 0.0;
  if (dcolor.cols() > 0) dout.middleRows(kLatentRow, kLatentChannels) = dcolor;
  if (dnormal.cols() > 0) dout.middleRows(kNormalRow, 3) = dnormal;

  const Eigen::MatrixXd dfeat = params_->main.backward(main_cache_, dout, &grad->main, true);
  const double* grid = params_->grid.data();
  double* dgrid = grad->grid.data();
  if (!observation) {
    for (Eigen::Index i = 0; i < n; ++i) enc.backward(grid, x_hat_.col(i), dfeat.col(i).data(), dgrid, nullptr);
    return;
  }
  Eigen::MatrixXd draw(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 dx;
    enc.backward(grid, x_hat_.col(i), dfeat.col(i).data(), dgrid, &dx);
    draw.col(i) = offset_jacobian_[i].transpose() * dx;
  }
  const Eigen::MatrixXd dnr = params_->nonrigid.backward(nr_cache_, draw, &grad->nonrigid, true);
  for (Eigen::Index i = 0; i < n; ++i) enc.backward(grid, points_->x_lbs.col(i), dnr.col(i).data(), dgrid, nullptr);
}

Points3 FieldTape::density_gradient() const {
  const GridEncoder& enc = *encoder_;
  const Eigen::Index n = points_->size();
  const double* grid = params_->grid.data();
  Eigen::MatrixXd dout = Eigen::MatrixXd::Zero(params_->main.output_dim(), n);
  dout.row(kDensityRow).setOnes();
  const Eigen::MatrixXd dfeat = params_->main.backward(main_cache_, dout, nullptr, true);
  Points3 g(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 dx;
    enc.backward(grid, x_hat_.col(i), dfeat.col(i).data(), nullptr, &dx);
    g.col(i) = dx;
  }
  if (context_->space == Space::kObservation) {
    Eigen::MatrixXd draw(3, n);
    for (Eigen::Index i = 0; i < n; ++i) draw.col(i) = offset_jacobian_[i].transpose() * g.col(i);
    const Eigen::MatrixXd dnr = params_->nonrigid.backward(nr_cache_, draw, nullptr, true);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec3 dx;
      enc.backward(grid, points_->x_lbs.col(i), dnr.col(i).data(), nullptr, &dx);
      const Vec3 g_lbs = g.col(i) + dx;
      g.col(i) = context_->deformation->linear(points_->vertex[i]).transpose() * g_lbs;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pre_clamp_[i] < 0.0)
      g.col(i).setZero();
    else
      g.col(i) += points_->prior_gradient.col(i);
  }
  return g;
}

namespace {

FieldSample single(const FieldParams& params, const SpaceContext& context, const PreparedPoints& p) {
  FieldTape tape;
  const FieldOutputs o = tape.forward(params, context, p);
  FieldSample s;
  s.sigma = o.sigma[0];
  s.color = o.color.col(0);
  s.normal = o.normal.col(0);
  s.prior_sigma = p.prior[0];
  return s;
}

}  // namespace

FieldSample eval_canonical(const FieldParams& params, const SpaceContext& canonical, const Vec3& x_c, double prior_sigma) {
  if (canonical.space != Space::kCanonical) throw InputError("eval_canonical needs a canonical-space context");
  return single(params, canonical, prepare_points(canonical, x_c, Eigen::VectorXd::Constant(1, prior_sigma)));
}

FieldSample eval_observation(const FieldParams& params, const SpaceContext& observation, const Vec3& x_o,
                             double prior_sigma) {
  if (observation.space != Space::kObservation) throw InputError("eval_observation needs an observation-space context");
  return single(params, observation, prepare_points(observation, x_o, Eigen::VectorXd::Constant(1, prior_sigma)));
}

FieldSample eval_field(const FieldParams& params, const SpaceContext& context, const Vec3& x) {
  return single(params, context, prepare_points(context, x));
}

Vec3 density_gradient(const FieldParams& params, const SpaceContext& context, const Vec3& x, GradientMode mode) {
  if (mode == GradientMode::kAnalytic) {
    const PreparedPoints p = prepare_points(context, x);
    FieldTape tape;
    tape.forward(params, context, p);
    return tape.density_gradient().col(0);
  }
  const double h = kDensityGradientStep;
  if (!inside_scene_box(x, h)) throw InputError("point too close to the scene box boundary for finite differences");
  Points3 pts(3, 6);
  for (int a = 0; a < 3; ++a) {
    pts.col(2 * a) = x + h * Vec3::Unit(a);
    pts.col(2 * a + 1) = x - h * Vec3::Unit(a);
  }
  const PreparedPoints p = prepare_points(context, pts);
  FieldTape tape;
  const FieldOutputs o = tape.forward(params, context, p);
  Vec3 g;
  for (int a = 0; a < 3; ++a) g[a] = (o.sigma[2 * a] - o.sigma[2 * a + 1]) / (2 * h);
  return g;
}

void encode_direction(const Vec3& dir, double* out) {
  for (int a = 0; a < 3; ++a) out[a] = dir[a];
  int k = 3;
  for (int o = 0; o < kBackgroundOctaves; ++o) {
    const double f = std::ldexp(std::numbers::pi, o);
    for (int a = 0; a < 3; ++a) {
      out[k++] = std::sin(f * dir[a]);
      out[k++] = std::cos(f * dir[a]);
    }
  }
}

Latent BackgroundTape::forward(const FieldParams& params, const Points3& directions) {
  const Eigen::Index n = directions.cols();
  input.resize(kBackgroundInputs, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (directions.col(i).squaredNorm() == 0.0) throw InputError("zero-norm ray direction");
    encode_direction(directions.col(i), input.col(i).data());
  }
  return params.background.forward(input, &cache);
}

void BackgroundTape::backward(const FieldParams& params, const Latent& dlatent, FieldParams* grad) const {
  params.background.backward(cache, dlatent, &grad->background, false);
}

Vec4 background_feature(const FieldParams& params, const Vec3& direction) {
  BackgroundTape tape;
  return tape.forward(params, direction).col(0);
}

}  // namespace avatarforge

namespace avatarforge {

Points3 density_gradients(const FieldParams& params, const SpaceContext& context, const PreparedPoints& points,
                          GradientMode mode) {
  FieldTape tape;
  tape.forward(params, context, points);
  Points3 g = tape.density_gradient();
  if (mode == GradientMode::kAnalytic) return g;
  const double h = kDensityGradientStep;
  std::vector<Eigen::Index> interior;
  for (Eigen::Index i = 0; i < points.size(); ++i)
    if (inside_scene_box(points.x.col(i), h)) interior.push_back(i);
  Points3 probes(3, 6 * static_cast<Eigen::Index>(interior.size()));
  for (size_t k = 0; k < interior.size(); ++k)
    for (int a = 0; a < 3; ++a) {
      probes.col(6 * k + 2 * a) = points.x.col(interior[k]) + h * Vec3::Unit(a);
      probes.col(6 * k + 2 * a + 1) = points.x.col(interior[k]) - h * Vec3::Unit(a);
    }
  const PreparedPoints pp = prepare_points(context, probes);
  FieldTape fd;
  const FieldOutputs o = fd.forward(params, context, pp);
  for (size_t k = 0; k < interior.size(); ++k)
    for (int a = 0; a < 3; ++a)
      g(a, interior[k]) = (o.sigma[6 * k + 2 * a] - o.sigma[6 * k + 2 * a + 1]) / (2 * h);
  return g;
}

}  // namespace avatarforge
