#pragma once

#include "avatarforge/common.hpp"
#include "avatarforge/rng.hpp"

#include <optional>
#include <string>
#include <utility>

namespace avatarforge {

enum class ViewTag : uint8_t { kFront = 0, kSide = 1, kBack = 2 };
const char* to_string(ViewTag tag);
// Front: azimuth in [300°, 360°) ∪ [0°, 60°); back: [120°, 240°]; side otherwise.
ViewTag view_tag_for_azimuth(double azimuth_deg);

struct CameraConfig {
  double radius_min = 1.0, radius_max = 1.5;
  double elevation_min = -10.0, elevation_max = 60.0;  // degrees
  double fov_min = 40.0, fov_max = 70.0;               // degrees
  int resolution = 64;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
};

// Pinhole camera looking at `look_at`. Azimuth 0° views the body's front
// from +z; elevation raises the camera toward +y.
struct Camera {
  Vec3 position = Vec3(0, 0, 1.25);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitY();
  double fov_y = 55.0;  // degrees
  int width = 64, height = 64;
  double radius = 1.25, elevation = 0.0, azimuth = 0.0;
  ViewTag tag = ViewTag::kFront;

  static Camera orbit(double radius, double elevation_deg, double azimuth_deg, double fov_deg, int width, int height);
  // Full-body preview framing: radius 1.5, elevation 10°, fov 60°.
  static Camera preview(int width, int height, double azimuth_deg = 0.0);
  // Ray through the center of pixel (px, py); row 0 is the top of the image.
  Ray ray(int px, int py) const;
  // Projects a world point to continuous pixel coordinates (x right, y down)
  // and returns its depth along the view axis.
  std::pair<Eigen::Vector2d, double> project(const Vec3& p) const;
};

Camera sample_camera(Rng& rng, const CameraConfig& config);

// Slab test against the scene box [-1,1]³; returns (t_near, t_far) with
// t_near ≥ 0, or nothing when the ray misses.
std::optional<std::pair<double, double>> intersect_scene_box(const Ray& ray);

}  // namespace avatarforge
