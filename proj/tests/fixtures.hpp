#pragma once

// Random scenes and views shared by the tests.

#include <cmath>
#include <numbers>
#include <random>

#include "evsplat/camera.hpp"
#include "evsplat/gaussian.hpp"
#include "evsplat/image.hpp"

namespace fixture {

using namespace evsplat;

inline Gaussian random_gaussian(std::mt19937_64& rng, double spread = 0.3, double min_opacity = 0.1,
                                double max_opacity = 0.8) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), unit(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  Gaussian g;
  g.position = Eigen::Vector3d(u(rng), u(rng), u(rng)) * spread;
  g.color = 1.5 * n(rng);
  g.opacity_logit = logit(min_opacity + (max_opacity - min_opacity) * unit(rng));
  g.rotation = Eigen::Vector4d(n(rng), n(rng), n(rng), n(rng));
  if (g.rotation.norm() < 0.2) g.rotation[0] += 1.0;
  for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(0.03 + 0.09 * unit(rng));
  return g;
}

inline GaussianScene random_scene(std::mt19937_64& rng, int count, double max_opacity = 0.8) {
  GaussianScene s;
  for (int i = 0; i < count; ++i) s.gaussians.push_back(random_gaussian(rng, 0.3, 0.1, max_opacity));
  return s;
}

// Turntable-style view of the origin at a random azimuth/elevation.
inline CameraView random_view(std::mt19937_64& rng, int size = 16, double focal = 18.0) {
  std::uniform_real_distribution<double> az(0.0, 360.0), el(-25.0, 25.0), rad(1.0, 1.4);
  SweepTrajectory t;
  t.intrinsics = Intrinsics::desk(size, focal);
  t.arc_degrees = az(rng);
  t.elevation_degrees = el(rng);
  t.radius = rad(rng);
  return pose_at(t, t.duration_us);
}

inline Image random_image(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h);
  for (double& v : img.pixels()) v = u(rng);
  return img;
}

// Smooth frame sequence: drifting sinusoidal blobs in [0.05, 0.95].
inline std::vector<Image> smooth_sequence(std::mt19937_64& rng, int w, int h, int frames) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 0.1 + 0.3 * u(rng), fy = 0.1 + 0.3 * u(rng), ph = 6.28 * u(rng), speed = 0.05 + 0.2 * u(rng);
  std::vector<Image> out;
  for (int k = 0; k < frames; ++k) {
    Image img(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img(x, y) = 0.5 + 0.45 * std::sin(fx * x + ph + speed * k) * std::cos(fy * y - 0.5 * speed * k);
    out.push_back(img);
  }
  return out;
}

}  // namespace fixture
