#include "evsplat/metrics.hpp"

#include <cmath>
#include <limits>

#include "evsplat/error.hpp"
#include "evsplat/loss.hpp"

namespace evsplat {

double psnr(const Image& x, const Image& y) {
  require_same_shape(x, y, "psnr");
  if (x.empty()) throw ValidationError("psnr: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double ssim_metric(const Image& x, const Image& y) {
  return ssim(x, y, 1.0, LossConfig{}, false).ssim;
}

EvalReport evaluate_images(std::span<const Image> renders, std::span<const Image> ground_truth) {
  if (renders.size() != ground_truth.size()) {
    throw ValidationError("evaluate: " + std::to_string(renders.size()) + " views but " +
                          std::to_string(ground_truth.size()) + " ground-truth frames");
  }
  if (renders.empty()) throw ValidationError("evaluate: no views");
  EvalReport report;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < renders.size(); ++i) {
    require_same_shape(renders[i], ground_truth[i], "evaluate");
    ViewScore s{psnr(renders[i], ground_truth[i]), ssim_metric(renders[i], ground_truth[i])};
    psnr_sum += s.psnr;
    ssim_sum += s.ssim;
    report.views.push_back(s);
  }
  report.mean_psnr = psnr_sum / static_cast<double>(renders.size());
  report.mean_ssim = ssim_sum / static_cast<double>(renders.size());
  return report;
}

EvalReport evaluate(const GaussianScene& scene, std::span<const CameraView> views,
                    std::span<const Image> ground_truth, const RenderSettings& settings) {
  if (views.size() != ground_truth.size()) {
    throw ValidationError("evaluate: " + std::to_string(views.size()) + " views but " +
                          std::to_string(ground_truth.size()) + " ground-truth frames");
  }
  std::vector<Image> renders;
  renders.reserve(views.size());
  for (const CameraView& v : views) renders.push_back(render(scene, v, settings).image);
  return evaluate_images(renders, ground_truth);
}

EvalReport evaluate(const GaussianScene& scene, const SweepTrajectory& trajectory, std::span<const Image> ground_truth,
                    std::span<const Timestamp> view_times, const RenderSettings& settings) {
  if (view_times.size() != ground_truth.size()) {
    throw ValidationError("evaluate: " + std::to_string(view_times.size()) + " view times but " +
                          std::to_string(ground_truth.size()) + " ground-truth frames");
  }
  std::vector<CameraView> views;
  views.reserve(view_times.size());
  for (Timestamp t : view_times) views.push_back(pose_at(trajectory, t));
  return evaluate(scene, views, ground_truth, settings);
}

}  // namespace evsplat
