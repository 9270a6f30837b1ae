#include "evsplat/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "evsplat/error.hpp"

namespace evsplat {

void LossConfig::validate() const {
  if (!(gamma > 0.0) || !(epsilon > 0.0) || !(linlog_threshold > 0.0)) {
    throw ValidationError("loss config: gamma, epsilon and B must be positive");
  }
  if (!(lambda >= 0.0)) throw ValidationError("loss config: lambda must be >= 0");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw ValidationError("loss config: SSIM window must be odd");
  if (!(ssim_sigma > 0.0) || !(k1 > 0.0) || !(k2 > 0.0)) throw ValidationError("loss config: SSIM constants must be positive");
}

Image log_image(const Image& image, const LossConfig& cfg) {
  Image out(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = std::log(std::pow(std::max(0.0, image[i]), cfg.gamma) + cfg.epsilon);
  }
  return out;
}

Image log_image_derivative(const Image& image, const LossConfig& cfg) {
  Image out(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::max(0.0, image[i]);
    out[i] = cfg.gamma * std::pow(v, cfg.gamma - 1.0) / (std::pow(v, cfg.gamma) + cfg.epsilon);
  }
  return out;
}

AccumImage predicted_difference(const Image& i_0, const Image& i_k, const LossConfig& cfg) {
  require_same_shape(i_0, i_k, "predicted_difference");
  return log_image(i_0, cfg) - log_image(i_k, cfg);
}

double linlog(double u, double threshold) {
  return u < threshold ? u * std::log(threshold) / threshold : std::log(u);
}

double linlog_derivative(double u, double threshold) {
  return u <= threshold ? std::log(threshold) / threshold : 1.0 / u;
}

Image linlog(const Image& u, const LossConfig& cfg) {
  Image out(u.width(), u.height());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = linlog(u[i], cfg.linlog_threshold);
  return out;
}

double signed_linlog(double u, double threshold) {
  return u < 0.0 ? -linlog(-u, threshold) : linlog(u, threshold);
}

LossGradient event_loss(const AccumImage& e_pred, const AccumImage& e_gt, const LossConfig& cfg) {
  require_same_shape(e_pred, e_gt, "event_loss");
  const double b = cfg.linlog_threshold;
  const double inv_n = 1.0 / static_cast<double>(e_pred.size());
  LossGradient out{0.0, Image(e_pred.width(), e_pred.height())};
  for (std::size_t i = 0; i < e_pred.size(); ++i) {
    const double p = signed_linlog(e_pred[i], b);
    const double t = signed_linlog(e_gt[i], b);
    const double diff = p * p - t * t;
    out.loss += diff * diff;
    out.grad[i] = inv_n * 4.0 * p * diff * linlog_derivative(std::abs(e_pred[i]), b);
  }
  out.loss *= inv_n;
  return out;
}

namespace {

// Separable Gaussian window; at the borders only in-bounds taps are used and
// the result is divided by their total weight.
class GaussianWindow {
 public:
  GaussianWindow(int size, double sigma) : half_(size / 2), taps_(size) {
    for (int k = -half_; k <= half_; ++k) taps_[k + half_] = std::exp(-(k * k) / (2.0 * sigma * sigma));
  }

  Image filter(const Image& in) const {
    return pass(pass(in, true, true), false, true);
  }

  // Transpose of filter().
  Image adjoint(const Image& in) const {
    return pass(pass(in, false, false), true, false);
  }

 private:
  // One 1D pass. `normalize_out` divides by the in-bounds weight at the output
  // pixel (forward); otherwise the input is divided by the weight at its own
  // position before spreading (adjoint).
  Image pass(const Image& in, bool horizontal, bool normalize_out) const {
    const int w = in.width(), h = in.height();
    const int len = horizontal ? w : h;
    std::vector<double> z(len, 0.0);
    for (int i = 0; i < len; ++i)
      for (int k = -half_; k <= half_; ++k)
        if (i + k >= 0 && i + k < len) z[i] += taps_[k + half_];

    Image out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int i = horizontal ? x : y;
        double acc = 0.0;
        for (int k = -half_; k <= half_; ++k) {
          const int j = i + k;
          if (j < 0 || j >= len) continue;
          const double v = horizontal ? in(j, y) : in(x, j);
          acc += taps_[k + half_] * (normalize_out ? v : v / z[j]);
        }
        out(x, y) = normalize_out ? acc / z[i] : acc;
      }
    }
    return out;
  }

  int half_;
  std::vector<double> taps_;
};

Image product(const Image& a, const Image& b) {
  Image out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

SsimResult ssim(const Image& x, const Image& y, double dynamic_range, const LossConfig& cfg, bool with_grad) {
  require_same_shape(x, y, "ssim");
  if (x.empty()) throw ValidationError("ssim: empty image");
  const GaussianWindow window(cfg.ssim_window, cfg.ssim_sigma);
  const double c1 = (cfg.k1 * dynamic_range) * (cfg.k1 * dynamic_range);
  const double c2 = (cfg.k2 * dynamic_range) * (cfg.k2 * dynamic_range);

  const Image mu_x = window.filter(x);
  const Image mu_y = window.filter(y);
  const Image e_xx = window.filter(product(x, x));
  const Image e_yy = window.filter(product(y, y));
  const Image e_xy = window.filter(product(x, y));

  const std::size_t n = x.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  Image g_mu(x.width(), x.height()), g_xx(x.width(), x.height()), g_xy(x.width(), x.height());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = mu_x[i], my = mu_y[i];
    const double var_x = e_xx[i] - mx * mx, var_y = e_yy[i] - my * my, cov = e_xy[i] - mx * my;
    const double a1 = 2.0 * mx * my + c1, a2 = 2.0 * cov + c2;
    const double b1 = mx * mx + my * my + c1, b2 = var_x + var_y + c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (with_grad) {
      g_mu[i] = inv_n * (2.0 * my * (a2 - a1) / (b1 * b2) - 2.0 * mx * s * (1.0 / b1 - 1.0 / b2));
      g_xx[i] = inv_n * (-s / b2);
      g_xy[i] = inv_n * (2.0 * a1 / (b1 * b2));
    }
  }

  SsimResult out;
  out.ssim = total * inv_n;
  if (with_grad) {
    const Image a_mu = window.adjoint(g_mu);
    const Image a_xx = window.adjoint(g_xx);
    const Image a_xy = window.adjoint(g_xy);
    out.grad = Image(x.width(), x.height());
    for (std::size_t i = 0; i < n; ++i) out.grad[i] = a_mu[i] + 2.0 * x[i] * a_xx[i] + y[i] * a_xy[i];
  }
  return out;
}

double dssim_dynamic_range(const Image& y) {
  double q = 1.0;
  for (double v : y.pixels()) q = std::max(q, std::abs(v));
  return q;
}

SsimResult dssim(const Image& x, const Image& y, const LossConfig& cfg) {
  return ssim(x, y, dssim_dynamic_range(y), cfg, true);
}

LossValue total_loss(const AccumImage& e_pred, const AccumImage& e_gt, const LossConfig& cfg) {
  LossGradient ev = event_loss(e_pred, e_gt, cfg);
  LossValue out;
  out.event_term = ev.loss;
  if (cfg.lambda == 0.0) {
    out.dssim_term = ssim(e_pred, e_gt, dssim_dynamic_range(e_gt), cfg, false).ssim;
    out.total = ev.loss;
    out.d_epred = std::move(ev.grad);
    return out;
  }
  const SsimResult s = dssim(e_pred, e_gt, cfg);
  out.dssim_term = s.ssim;
  out.total = ev.loss + cfg.lambda * (1.0 - s.ssim);
  out.d_epred = std::move(ev.grad);
  for (std::size_t i = 0; i < out.d_epred.size(); ++i) out.d_epred[i] -= cfg.lambda * s.grad[i];
  return out;
}

LossGradient mse_loss(const Image& pred, const Image& target) {
  require_same_shape(pred, target, "mse_loss");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  LossGradient out{0.0, Image(pred.width(), pred.height())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

}  // namespace evsplat
