#include "evsplat/gaussian.hpp"

#include <random>

#include <Eigen/LU>

#include "evsplat/error.hpp"

namespace evsplat {

ParamVector pack(const Gaussian& g) {
  return {g.position.x(), g.position.y(), g.position.z(), g.color,          g.opacity_logit,
          g.rotation[0],  g.rotation[1],  g.rotation[2],  g.rotation[3],    g.log_scale.x(),
          g.log_scale.y(), g.log_scale.z()};
}

Gaussian unpack(const ParamVector& v) {
  Gaussian g;
  g.position = {v[0], v[1], v[2]};
  g.color = v[3];
  g.opacity_logit = v[4];
  g.rotation = {v[5], v[6], v[7], v[8]};
  g.log_scale = {v[9], v[10], v[11]};
  return g;
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector4d& rotation, const Eigen::Vector3d& scales) {
  const double n = rotation.norm();
  if (!(n > 0.0)) throw ValidationError("build_covariance: zero quaternion");
  const Eigen::Matrix3d m = rotation_matrix(rotation / n) * scales.asDiagonal();
  Eigen::Matrix3d sigma;
  // Lower triangle mirrored so the result is exactly symmetric.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) sigma(i, j) = sigma(j, i) = m.row(i).dot(m.row(j));
  return sigma;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p, double fx, double fy) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << fx * iz, 0.0, -fx * p.x() * iz * iz,
       0.0, fy * iz, -fy * p.y() * iz * iz;
  return j;
}

Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma, const RigidTransform& world_to_cam,
                                   const Eigen::Vector3d& mean_cam, double fx, double fy) {
  if (!(mean_cam.z() > kNearPlane)) throw ValidationError("project_covariance: point behind near plane");
  const Eigen::Matrix<double, 2, 3> t = projection_jacobian(mean_cam, fx, fy) * world_to_cam.rotation;
  Eigen::Matrix2d cov = t * sigma * t.transpose();
  cov(0, 0) += kLowPassFloor;
  cov(1, 1) += kLowPassFloor;
  return cov;
}

double eval_gaussian_2d(const Eigen::Matrix2d& sigma2, const Eigen::Vector2d& delta) {
  const double det = sigma2.determinant();
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw ValidationError("eval_gaussian_2d: singular covariance");
  const Eigen::Matrix2d inv = sigma2.inverse();
  return std::exp(-0.5 * delta.dot(inv * delta));
}

namespace {

void check_bounds(const Box& b) {
  const Eigen::Vector3d ext = b.hi - b.lo;
  if (!((ext.array() > 0.0).all()) || !ext.allFinite()) {
    throw ValidationError("initialisation bounds must have positive volume");
  }
}

}  // namespace

GaussianScene random_init(std::size_t count, const Box& bounds, std::uint64_t seed) {
  if (count == 0) throw ValidationError("random_init: count must be >= 1");
  check_bounds(bounds);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GaussianScene scene;
  scene.bounds = bounds;
  scene.gaussians.resize(count);
  const double log_scale = std::log(0.02 * bounds.diagonal());
  const double opacity = logit(0.1);
  for (Gaussian& g : scene.gaussians) {
    for (int a = 0; a < 3; ++a) g.position[a] = bounds.lo[a] + (bounds.hi[a] - bounds.lo[a]) * unit(rng);
    g.color = 0.0;
    g.opacity_logit = opacity;
    g.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
    g.log_scale = Eigen::Vector3d::Constant(log_scale);
  }
  return scene;
}

GaussianScene make_reference_scene(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kRadius = 0.28;

  GaussianScene scene;
  scene.gaussians.resize(count);
  for (Gaussian& g : scene.gaussians) {
    do {
      for (int a = 0; a < 3; ++a) g.position[a] = kRadius * (2.0 * unit(rng) - 1.0);
    } while (g.position.norm() > kRadius);
    g.color = logit(0.15 + 0.8 * unit(rng));
    g.opacity_logit = logit(0.6 + 0.35 * unit(rng));
    Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
    g.rotation = q.normalized();
    for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(0.025 + 0.05 * unit(rng));
  }
  return scene;
}

}  // namespace evsplat
