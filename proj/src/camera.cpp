#include "avatarforge/camera.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <numbers>

namespace avatarforge {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

const char* to_string(ViewTag tag) {
  switch (tag) {
    case ViewTag::kFront: return "front";
    case ViewTag::kSide: return "side";
    case ViewTag::kBack: return "back";
  }
  return "front";
}

ViewTag view_tag_for_azimuth(double azimuth_deg) {
  double a = std::fmod(azimuth_deg, 360.0);
  if (a < 0) a += 360.0;
  if (a >= 300.0 || a < 60.0) return ViewTag::kFront;
  if (a >= 120.0 && a <= 240.0) return ViewTag::kBack;
  return ViewTag::kSide;
}

Camera Camera::preview(int width, int height, double azimuth_deg) {
  return orbit(1.5, 10.0, azimuth_deg, 60.0, width, height);
}

Camera Camera::orbit(double radius, double elevation_deg, double azimuth_deg, double fov_deg, int width, int height) {
  if (!(radius > 0) || width < 1 || height < 1 || !(fov_deg > 0 && fov_deg < 180))
    throw InputError("invalid camera parameters");
  Camera c;
  const double el = radians(elevation_deg), az = radians(azimuth_deg);
  c.position = radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  c.fov_y = fov_deg;
  c.width = width;
  c.height = height;
  c.radius = radius;
  c.elevation = elevation_deg;
  c.azimuth = azimuth_deg;
  c.tag = view_tag_for_azimuth(azimuth_deg);
  return c;
}

namespace {

struct Frame {
  Vec3 forward, right, up;
};

Frame frame(const Camera& c) {
  Frame f;
  f.forward = (c.look_at - c.position).normalized();
  Vec3 right = f.forward.cross(c.up);
  // Looking straight along the up vector: pick any perpendicular.
  if (right.squaredNorm() < 1e-20) right = f.forward.cross(Vec3::UnitZ());
  f.right = right.normalized();
  f.up = f.right.cross(f.forward);
  return f;
}

}  // namespace

Ray Camera::ray(int px, int py) const {
  const Frame f = frame(*this);
  const double tan_half = std::tan(radians(fov_y) / 2.0);
  const double aspect = static_cast<double>(width) / height;
  const double u = ((px + 0.5) / width * 2.0 - 1.0) * tan_half * aspect;
  const double v = (1.0 - (py + 0.5) / height * 2.0) * tan_half;
  return {position, (f.forward + u * f.right + v * f.up).normalized()};
}

std::pair<Eigen::Vector2d, double> Camera::project(const Vec3& p) const {
  const Frame f = frame(*this);
  const Vec3 d = p - position;
  const double depth = d.dot(f.forward);
  const double tan_half = std::tan(radians(fov_y) / 2.0);
  const double aspect = static_cast<double>(width) / height;
  const double u = d.dot(f.right) / depth / (tan_half * aspect);
  const double v = d.dot(f.up) / depth / tan_half;
  return {Eigen::Vector2d((u + 1.0) / 2.0 * width, (1.0 - v) / 2.0 * height), depth};
}

Camera sample_camera(Rng& rng, const CameraConfig& cfg) {
  const double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
  const double elevation = rng.uniform(cfg.elevation_min, cfg.elevation_max);
  const double azimuth = rng.uniform(0.0, 360.0);
  const double fov = rng.uniform(cfg.fov_min, cfg.fov_max);
  return Camera::orbit(radius, elevation, azimuth, fov, cfg.resolution, cfg.resolution);
}

std::optional<std::pair<double, double>> intersect_scene_box(const Ray& ray) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (d == 0.0) {
      if (o < -1.0 || o > 1.0) return std::nullopt;
      continue;
    }
    double ta = (-1.0 - o) / d, tb = (1.0 - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

}  // namespace avatarforge
