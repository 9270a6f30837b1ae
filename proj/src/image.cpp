#include "evsplat/image.hpp"

#include <string>

#include "evsplat/error.hpp"

namespace evsplat {

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw ValidationError("image dimensions must be non-negative");
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

Image& Image::operator+=(const Image& other) {
  require_same_shape(*this, other, "image addition");
  for (std::size_t i = 0; i < pixels_.size(); ++i) pixels_[i] += other.pixels_[i];
  return *this;
}

Image& Image::operator-=(const Image& other) {
  require_same_shape(*this, other, "image subtraction");
  for (std::size_t i = 0; i < pixels_.size(); ++i) pixels_[i] -= other.pixels_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : pixels_) v *= s;
  return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(Image a, double s) { return a *= s; }

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(what) + ": resolution mismatch (" + std::to_string(a.width()) +
                          "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                          "x" + std::to_string(b.height()) + ")");
  }
}

}  // namespace evsplat
