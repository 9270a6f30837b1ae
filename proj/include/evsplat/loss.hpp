#pragma once

#include "evsplat/image.hpp"

namespace evsplat {

struct LossConfig {
  double gamma = 2.2;
  double epsilon = 1e-5;
  double linlog_threshold = 20.0;  // B
  double lambda = 0.1;             // D-SSIM weight
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;

  void validate() const;
};

/// log(I^g + eps), elementwise.
Image log_image(const Image& image, const LossConfig& cfg);
/// d/dI log(I^g + eps) = g I^(g-1) / (I^g + eps), elementwise.
Image log_image_derivative(const Image& image, const LossConfig& cfg);

/// E_pred = log_image(I_0) - log_image(I_k).
AccumImage predicted_difference(const Image& i_0, const Image& i_k, const LossConfig& cfg);

/// Linear below B (slope ln B / B), logarithmic from B upwards.
double linlog(double u, double threshold);
/// Derivative of linlog; the joint u == B takes the linear slope.
double linlog_derivative(double u, double threshold);
Image linlog(const Image& u, const LossConfig& cfg);
/// sign(u) * linlog(|u|), the mapping applied to event images.
double signed_linlog(double u, double threshold);

struct LossGradient {
  double loss = 0.0;
  Image grad;
};

/// Normalised L2 event loss: mean over pixels of (L(pred)^2 - L(gt)^2)^2 with
/// L = signed_linlog. Gradient is with respect to E_pred.
LossGradient event_loss(const AccumImage& e_pred, const AccumImage& e_gt, const LossConfig& cfg);

struct SsimResult {
  double ssim = 0.0;
  Image grad;  // d ssim / d x; empty when not requested
};

/// Mean SSIM over Gaussian windows (truncated and renormalised at the borders)
/// with c1 = (k1 q)^2, c2 = (k2 q)^2.
SsimResult ssim(const Image& x, const Image& y, double dynamic_range, const LossConfig& cfg, bool with_grad);

/// SSIM term of the training loss; q = max(|y|) floored at 1.
SsimResult dssim(const Image& x, const Image& y, const LossConfig& cfg);
double dssim_dynamic_range(const Image& y);

struct LossValue {
  double total = 0.0;
  double event_term = 0.0;
  double dssim_term = 0.0;  // the SSIM value; total = event + lambda * (1 - dssim_term)
  Image d_epred;
};

LossValue total_loss(const AccumImage& e_pred, const AccumImage& e_gt, const LossConfig& cfg);

/// Plain per-pixel mean squared error, gradient with respect to `pred`.
LossGradient mse_loss(const Image& pred, const Image& target);

}  // namespace evsplat
