#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evsplat/camera.hpp"
#include "evsplat/gaussian.hpp"
#include "evsplat/image.hpp"

namespace evsplat {

/// Per-splat alpha is clamped here.
inline constexpr double kMaxAlpha = 0.99;
/// A pixel stops compositing once its transmittance falls below this.
inline constexpr double kMinTransmittance = 1e-4;
/// Per-pixel alpha is min(kMaxAlpha, opacity * G - kAlphaTail) where positive: the
/// support is finite and the image stays continuous in every parameter.
inline constexpr double kAlphaTail = 1e-8;

struct RenderSettings {
  double background = 0.0;
  int tile_size = 16;
};

/// Screen-space state of one Gaussian for one view; cached for the backward pass.
struct ProjectedSplat {
  bool visible = false;
  Eigen::Vector3d mean_cam = Eigen::Vector3d::Zero();
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix3d cov3d = Eigen::Matrix3d::Zero();
  Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();
  Eigen::Vector3d conic = Eigen::Vector3d::Zero();  // inverse of cov2d as (a, b, c)
  double min_power = 0.0;                           // log(kAlphaTail / opacity)
  double opacity = 0.0;
  double color = 0.0;
  int radius = 0;                 // pixels; 0 when culled
  int px0 = 0, px1 = -1;          // inclusive pixel bounds of the support
  int py0 = 0, py1 = -1;
  int tile_x0 = 0, tile_x1 = 0;   // half-open tile ranges
  int tile_y0 = 0, tile_y1 = 0;
};

struct RenderResult {
  Image image;          // grayscale radiance, background blended through residual transmittance
  Image transmittance;  // final per-pixel transmittance
  std::vector<std::uint32_t> contributors;  // per pixel: tile-list entries visited before termination
  std::vector<ProjectedSplat> splats;       // one per Gaussian, scene order
  std::vector<std::uint32_t> depth_order;   // visible Gaussians, front to back
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::uint32_t> tile_offsets;  // tiles_x * tiles_y + 1 entries
  std::vector<std::uint32_t> tile_entries;  // Gaussian indices grouped by tile, depth order
  std::uint64_t tag = 0;                    // fingerprint of (scene, view, settings)
};

struct ParamGradients {
  std::vector<ParamVector> params;  // dL/dtheta in unconstrained space, scene order
  std::vector<double> mean2d_norm;  // |dL/d mean2d| in NDC units, for densification
  std::vector<std::uint8_t> visible;
};

/// Forward splatting of `scene` into `view`. Throws ValidationError on an empty scene.
RenderResult render(const GaussianScene& scene, const CameraView& view, const RenderSettings& settings = {});

/// Gradients of L = sum(d_image * image) with respect to every Gaussian parameter.
/// `result` must come from render() on the same scene, view and settings.
ParamGradients render_backward(const GaussianScene& scene, const CameraView& view, const RenderResult& result,
                               const Image& d_image, const RenderSettings& settings = {});

std::pair<RenderResult, RenderResult> render_grayscale_pair(const GaussianScene& scene, const CameraView& view_0,
                                                            const CameraView& view_k,
                                                            const RenderSettings& settings = {});

/// Worker threads for render and render_backward; results do not depend on the count.
void set_worker_threads(int count);
int worker_threads();

/// Fingerprint used to tie a RenderResult to its inputs.
std::uint64_t render_tag(const GaussianScene& scene, const CameraView& view, const RenderSettings& settings);

}  // namespace evsplat
