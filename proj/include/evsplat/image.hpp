#pragma once

#include <cstddef>
#include <vector>

namespace evsplat {

/// Row-major single-channel grid of doubles. Used for rendered images,
/// accumulated event images and per-pixel gradients alike.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  double& operator()(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double operator()(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double& operator[](std::size_t i) { return pixels_[i]; }
  double operator[](std::size_t i) const { return pixels_[i]; }

  std::vector<double>& pixels() { return pixels_; }
  const std::vector<double>& pixels() const { return pixels_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(double s);

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(Image a, double s);

/// E_gt (integer polarity sums) and E_pred (real log differences) share one layout.
using AccumImage = Image;

// Throws ValidationError naming `what` when the shapes differ.
void require_same_shape(const Image& a, const Image& b, const char* what);

}  // namespace evsplat
