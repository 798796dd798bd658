#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "renoscan/error.hpp"

namespace renoscan {

/// Single-channel raster of real-valued intensities, row-major, x = column, y = row.
class GrayImage {
 public:
  GrayImage() : GrayImage(1, 1) {}

  GrayImage(int width, int height, double fill = 0.0) : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  GrayImage(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw std::invalid_argument("GrayImage: data length does not match width*height");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "GrayImage: non-finite intensity");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(int x, int y) const { return data_[index(x, y)]; }
  double& operator()(int x, int y) { return data_[index(x, y)]; }

  /// Edge-replicated read.
  double clamped(int x, int y) const {
    return (*this)(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<const double> pixels() const& noexcept { return data_; }
  std::span<double> pixels() & noexcept { return data_; }
  void pixels() && = delete;

  bool same_shape(const GrayImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  static void check_dims(int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("GrayImage: width and height must be >= 1");
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<double> data_;
};

/// Binary region flags, row-major, same addressing as GrayImage.
class BinaryMask {
 public:
  BinaryMask() : BinaryMask(1, 1) {}

  BinaryMask(int width, int height, bool fill = false) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw std::invalid_argument("BinaryMask: width and height must be >= 1");
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool inside(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool value) { bits_[index(x, y)] = value ? 1 : 0; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::size_t count_inside() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  std::span<const std::uint8_t> bits() const& noexcept { return bits_; }
  void bits() && = delete;

  bool same_shape(const GrayImage& img) const noexcept {
    return width_ == img.width() && height_ == img.height();
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
};

/// Linear min-max map onto [0, 255]. A constant image maps to all zeros.
inline GrayImage rescale_to_255(const GrayImage& img) {
  const auto px = img.pixels();
  const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  GrayImage out(img.width(), img.height(), 0.0);
  if (!(range > 0.0)) return out;
  auto dst = out.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) dst[i] = 255.0 * ((px[i] - lo) / range);
  return out;
}

/// Zeroes every pixel outside the mask.
inline GrayImage apply_mask(const GrayImage& img, const BinaryMask& mask) {
  if (!mask.same_shape(img)) throw std::invalid_argument("apply_mask: image and mask dimensions differ");
  GrayImage out = img;
  auto dst = out.pixels();
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (bits[i] == 0) dst[i] = 0.0;
  }
  return out;
}

}  // namespace renoscan
