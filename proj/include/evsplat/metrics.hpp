#pragma once

#include <span>
#include <string>
#include <vector>

#include "evsplat/camera.hpp"
#include "evsplat/gaussian.hpp"
#include "evsplat/image.hpp"
#include "evsplat/rasterizer.hpp"

namespace evsplat {

/// 10 log10(1 / MSE) for images in [0, 1]. Identical images give +infinity.
double psnr(const Image& x, const Image& y);

/// Gaussian-window SSIM with unit dynamic range; same implementation as the training term.
double ssim_metric(const Image& x, const Image& y);

struct ViewScore {
  double psnr = 0.0;  // may be +infinity
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<ViewScore> views;
  double mean_psnr = 0.0;  // +infinity if any view is infinite
  double mean_ssim = 0.0;
};

/// Scores the renders of `scene` against `ground_truth` (one frame per view).
/// Throws ValidationError when the counts or resolutions disagree.
EvalReport evaluate(const GaussianScene& scene, std::span<const CameraView> views,
                    std::span<const Image> ground_truth, const RenderSettings& settings = {});

/// Renders the trajectory at `view_times`; one ground-truth frame per time.
EvalReport evaluate(const GaussianScene& scene, const SweepTrajectory& trajectory, std::span<const Image> ground_truth,
                    std::span<const Timestamp> view_times, const RenderSettings& settings = {});

/// Scores precomputed renders.
EvalReport evaluate_images(std::span<const Image> renders, std::span<const Image> ground_truth);

}  // namespace evsplat
