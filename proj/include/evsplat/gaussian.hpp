#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "evsplat/camera.hpp"

namespace evsplat {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Diagonal term added to every projected covariance, in px^2.
inline constexpr double kLowPassFloor = 0.3;
/// Gaussians at camera depth <= this are culled.
inline constexpr double kNearPlane = 0.01;

/// One primitive, stored in unconstrained (pre-activation) form.
struct Gaussian {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double color = 0.0;          // sigmoid -> grayscale radiance in (0, 1)
  double opacity_logit = 0.0;  // sigmoid -> alpha
  Eigen::Vector4d rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z), unnormalised
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();             // exp -> axis scales

  double activated_color() const { return sigmoid(color); }
  double activated_opacity() const { return sigmoid(opacity_logit); }
  Eigen::Vector3d activated_scale() const { return log_scale.array().exp(); }

  bool operator==(const Gaussian&) const = default;
};

/// Flat parameter layout shared by gradients and optimizer state.
inline constexpr int kParamsPerGaussian = 12;
using ParamVector = std::array<double, kParamsPerGaussian>;

enum class ParamGroup { Position, Color, Opacity, Rotation, Scale };
inline constexpr std::array<int, 5> kGroupOffset = {0, 3, 4, 5, 9};
inline constexpr std::array<int, 5> kGroupSize = {3, 1, 1, 4, 3};

ParamVector pack(const Gaussian& g);
Gaussian unpack(const ParamVector& v);

struct Box {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-0.35);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(0.35);

  double diagonal() const { return (hi - lo).norm(); }
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

struct GaussianScene {
  std::vector<Gaussian> gaussians;
  Box bounds;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
  bool operator==(const GaussianScene& o) const { return gaussians == o.gaussians; }
};

/// Rotation matrix of a unit quaternion (w, x, y, z).
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& unit_quaternion);

/// Sigma = R S S^T R^T. The quaternion is normalised first; a zero quaternion throws.
Eigen::Matrix3d build_covariance(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scales);

/// Local affine projection Jacobian of the pinhole model at a camera-space point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& mean_cam, double fx, double fy);

/// Screen-space covariance J W Sigma W^T J^T plus the low-pass floor on the diagonal.
/// Throws ValidationError when mean_cam is at or behind the near plane.
Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma, const RigidTransform& world_to_cam,
                                   const Eigen::Vector3d& mean_cam, double fx, double fy);

/// exp(-1/2 d^T Sigma'^-1 d). Throws on a singular covariance.
double eval_gaussian_2d(const Eigen::Matrix2d& sigma2, const Eigen::Vector2d& delta);

/// `count` Gaussians uniform in `bounds`: alpha 0.1, isotropic scale 2% of the box
/// diagonal, identity rotation, mid-gray. Deterministic in `seed`.
GaussianScene random_init(std::size_t count, const Box& bounds, std::uint64_t seed);

/// Seeded synthetic object used as ground truth by the CLI and acceptance tests:
/// opaque, anisotropic, varied-gray Gaussians packed inside a ball of radius 0.28.
GaussianScene make_reference_scene(std::size_t count, std::uint64_t seed);

}  // namespace evsplat
