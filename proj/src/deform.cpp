#include "avatarforge/deform.hpp"

#include <cmath>
#include <string>

namespace avatarforge {

Deformation::Deformation(const PosedBody& canonical, const PosedBody& observed,
                         std::shared_ptr<const SpatialIndex> observed_index)
    : index_(std::move(observed_index)) {
  const Eigen::Index V = observed.vertices.rows();
  if (canonical.vertices.rows() != V) throw InputError("dimension mismatch: canonical and observed bodies differ in vertex count");
  if (!index_ || index_->mesh().vertices.size() != static_cast<size_t>(V))
    throw InputError("dimension mismatch: spatial index does not match the observed body");
  delta_.resize(V);
  shift_.resize(V);
  observed_.resize(V);
  singular_.assign(V, 0);
  for (Eigen::Index v = 0; v < V; ++v) {
    const Affine3& ga = canonical.per_vertex_transform[v];
    const Affine3& go = observed.per_vertex_transform[v];
    observed_[v] = observed.vertices.row(v).transpose();
    shift_[v] = canonical.vertices.row(v).transpose() - observed_[v];
    const Mat3 lo = go.leftCols<3>();
    const double det = lo.determinant();
    if (std::abs(det) < 1e-8 || std::abs(ga.leftCols<3>().determinant()) < 1e-8) {
      singular_[v] = 1;
      delta_[v].setZero();
      continue;
    }
    if (ga.leftCols<3>() == lo)
      delta_[v].setZero();
    else
      delta_[v] = ga.leftCols<3>() * lo.inverse() - Mat3::Identity();
  }
}

Deformation::Result Deformation::inverse_lbs(const Vec3& x_o) const {
  const uint32_t v = index_->nearest_vertex(x_o).first;
  if (singular_[v]) throw NumericError("non-invertible skin transform at vertex " + std::to_string(v));
  return {x_o + shift_[v] + delta_[v] * (x_o - observed_[v]), v};
}

Vec3 bound_offset(const Vec3& raw, Mat3* jacobian) {
  const double r = raw.norm();
  // offset = s(r)·o with s = 0.1·tanh(r)/r; ∂offset/∂o = s·I + (s'(r)/r)·o·oᵀ.
  double s, h;
  if (r < 1e-3) {
    const double r2 = r * r;
    s = kMaxNonrigidOffset * (1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0);
    h = kMaxNonrigidOffset * (-2.0 / 3.0 + 8.0 * r2 / 15.0);
  } else {
    const double t = std::tanh(r);
    s = kMaxNonrigidOffset * t / r;
    h = kMaxNonrigidOffset * ((1.0 - t * t) * r - t) / (r * r * r);
  }
  if (jacobian) *jacobian = s * Mat3::Identity() + h * raw * raw.transpose();
  return s * raw;
}

Vec3 nonrigid_offset(const FieldParams& params, const Vec3& x_lbs) {
  const GridEncoder enc = params.encoder();
  Eigen::MatrixXd feat(enc.output_dim(), 1);
  enc.encode(params.grid.data(), x_lbs, feat.data());
  const Eigen::MatrixXd raw = params.nonrigid.forward(feat);
  return bound_offset(raw.col(0));
}

Vec3 deform_to_canonical(const FieldParams& params, const Deformation& deformation, const Vec3& x_o) {
  const Vec3 x_lbs = deformation.inverse_lbs(x_o).x;
  return x_lbs + nonrigid_offset(params, x_lbs);
}

}  // namespace avatarforge
