#include "avatarforge/losses.hpp"

#include <cmath>
#include <cstdio>

namespace avatarforge {

double normal_term(double sigma, const Vec3& normal, const Vec3& density_gradient, double* dsigma, Vec3* dnormal) {
  const double e = std::exp(-sigma);
  const double b = std::abs(1.0 - e);
  const Vec3 r = density_gradient - normal;
  const double r2 = r.squaredNorm();
  if (dsigma) *dsigma = (sigma >= 0.0 ? e : -e) * r2;
  if (dnormal) *dnormal = -2.0 * b * r;
  return b * r2;
}

NormalLoss normal_consistency_loss(const std::vector<FieldSample>& samples) {
  NormalLoss out;
  const auto n = static_cast<Eigen::Index>(samples.size());
  out.dsigma = Eigen::VectorXd::Zero(n);
  out.dnormal = Points3::Zero(3, n);
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const FieldSample& s = samples[i];
    if (!s.density_gradient) throw InputError("normal loss needs density gradients (sample " + std::to_string(i) + ")");
    double ds;
    Vec3 dn;
    out.value += normal_term(s.sigma, s.normal, *s.density_gradient, &ds, &dn) * inv;
    out.dsigma[i] = ds * inv;
    out.dnormal.col(i) = dn * inv;
  }
  return out;
}

FieldParams total_step_loss(const LossWeights& w, const FieldParams& sds_c, const FieldParams& sds_o,
                            const FieldParams& normal_gradient, double normal_loss, double sds_c_norm, double sds_o_norm,
                            LossReport* report) {
  if (!sds_c.all_finite()) throw NumericError("non-finite canonical SDS gradient");
  if (!sds_o.all_finite()) throw NumericError("non-finite observation SDS gradient");
  if (!normal_gradient.all_finite() || !std::isfinite(normal_loss)) throw NumericError("non-finite normal loss");
  FieldParams total = sds_c.zeros_like();
  total.add_scaled(sds_c, w.lambda_sds);
  total.add_scaled(sds_o, w.lambda_sds);
  total.add_scaled(normal_gradient, w.lambda_n);
  if (report) {
    report->sds_canonical = sds_c_norm;
    report->sds_observation = sds_o_norm;
    report->normal_loss = normal_loss;
    report->lambda_sds = w.lambda_sds;
    report->lambda_n = w.lambda_n;
    report->total_weighted = w.lambda_sds * (sds_c_norm + sds_o_norm) + w.lambda_n * normal_loss;
  }
  return total;
}

std::string loss_csv_header() { return "step,sds_c_gradnorm,sds_o_gradnorm,normal_loss,total\n"; }

std::string loss_csv_row(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step), r.sds_canonical,
                r.sds_observation, r.normal_loss, r.total_weighted);
  return buf;
}

}  // namespace avatarforge
