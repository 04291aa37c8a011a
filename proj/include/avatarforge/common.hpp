#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace avatarforge {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
// Affine transform [linear | translation].
using Affine3 = Eigen::Matrix<double, 3, 4>;
// Column-per-point matrices.
using Points3 = Eigen::Matrix<double, 3, Eigen::Dynamic>;
using Latent = Eigen::Matrix<double, 4, Eigen::Dynamic>;

inline Vec3 apply(const Affine3& g, const Vec3& p) {
  return g.leftCols<3>() * p + g.col(3);
}

// Base of all library errors. The CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files and configs.
class InputError : public Error {
 public:
  using Error::Error;
};

// Denoiser unreachable, protocol violation, bad reply.
class DenoiserError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, singular transforms.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace avatarforge
