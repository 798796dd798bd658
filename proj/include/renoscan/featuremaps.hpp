#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "renoscan/imaging.hpp"
#include "renoscan/normalize.hpp"

namespace renoscan {

/// Intensities at or below this value get a zero relative gradient.
inline constexpr double kGradientFloor = 1e-6;

/// Relative gradient magnitude |grad f| / f with central differences and edge
/// replication at the border. Not rescaled.
inline GrayImage gradient_ratio(const GrayImage& img, double floor = kGradientFloor) {
  GrayImage out(img.width(), img.height(), 0.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double f = img(x, y);
      if (f <= floor) continue;
      const double gx = 0.5 * (img.clamped(x + 1, y) - img.clamped(x - 1, y));
      const double gy = 0.5 * (img.clamped(x, y + 1) - img.clamped(x, y - 1));
      out(x, y) = std::sqrt(gx * gx + gy * gy) / f;
    }
  }
  return out;
}

/// Gradient feature map on the [0, 255] scale.
inline GrayImage gradient_map(const GrayImage& img) { return rescale_to_255(gradient_ratio(img)); }

struct Pixel {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Edge pixel set, stored sorted in row-major order without duplicates.
class EdgeMap {
 public:
  EdgeMap(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw std::invalid_argument("EdgeMap: width and height must be >= 1");
  }

  EdgeMap(int width, int height, std::vector<Pixel> pixels) : EdgeMap(width, height) {
    for (const auto& p : pixels) {
      if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
        throw std::invalid_argument("EdgeMap: pixel out of bounds");
      }
    }
    std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) {
      return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
    pixels_ = std::move(pixels);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<Pixel>& pixels() const noexcept { return pixels_; }
  bool empty() const noexcept { return pixels_.empty(); }

  BinaryMask to_mask() const {
    BinaryMask m(width_, height_);
    for (const auto& p : pixels_) m.set(p.x, p.y, true);
    return m;
  }

 private:
  int width_;
  int height_;
  std::vector<Pixel> pixels_;
};

struct CannyConfig {
  double sigma = 1.4;
  double low_frac = 0.1;
  double high_frac = 0.2;
};

namespace detail {

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;

  GrayImage tmp(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * img.clamped(x + i, y);
      tmp(x, y) = acc;
    }
  GrayImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.clamped(x, y + i);
      out(x, y) = acc;
    }
  return out;
}

}  // namespace detail

/// Canny detector: Gaussian smoothing, Sobel gradients, non-maximum suppression
/// along the quantized gradient direction, and 8-connected hysteresis with
/// thresholds at fractions of the maximum gradient magnitude.
inline EdgeMap canny_edges(const GrayImage& img, const CannyConfig& cfg = {}) {
  if (!(cfg.low_frac > 0.0 && cfg.low_frac < cfg.high_frac && cfg.high_frac <= 1.0)) {
    throw std::invalid_argument("canny_edges: require 0 < low_frac < high_frac <= 1");
  }
  const int w = img.width(), h = img.height();
  const GrayImage smooth = detail::gaussian_blur(img, cfg.sigma);

  GrayImage mag(w, h), gxs(w, h), gys(w, h);
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto p = [&](int dx, int dy) { return smooth.clamped(x + dx, y + dy); };
      const double gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
      const double gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
      gxs(x, y) = gx;
      gys(x, y) = gy;
      mag(x, y) = std::hypot(gx, gy);
      max_mag = std::max(max_mag, mag(x, y));
    }
  EdgeMap none(w, h);
  if (!(max_mag > 0.0)) return none;

  const double high = cfg.high_frac * max_mag;
  const double low = cfg.low_frac * max_mag;
  auto m = [&](int x, int y) { return mag.contains(x, y) ? mag(x, y) : 0.0; };

  // 0 suppressed, 1 weak, 2 strong
  std::vector<std::uint8_t> state(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
  std::vector<Pixel> stack;
  constexpr double tan22 = 0.41421356237309503;  // tan(22.5 deg)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = mag(x, y);
      if (v < low || v <= 0.0) continue;
      const double gx = gxs(x, y), gy = gys(x, y);
      const double ax = std::abs(gx), ay = std::abs(gy);
      int dx = 0, dy = 0;
      if (ay <= tan22 * ax) {
        dx = 1;
      } else if (ax <= tan22 * ay) {
        dy = 1;
      } else {
        dx = 1;
        dy = (gx > 0) == (gy > 0) ? 1 : -1;
      }
      // Asymmetric comparison keeps exactly one pixel of a symmetric ridge.
      if (!(v > m(x - dx, y - dy) && v >= m(x + dx, y + dy))) continue;
      const std::size_t idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      if (v >= high) {
        state[idx] = 2;
        stack.push_back({x, y});
      } else {
        state[idx] = 1;
      }
    }

  while (!stack.empty()) {
    const Pixel p = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = p.x + dx, ny = p.y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t idx = static_cast<std::size_t>(ny) * static_cast<std::size_t>(w) + static_cast<std::size_t>(nx);
        if (state[idx] == 1) {
          state[idx] = 2;
          stack.push_back({nx, ny});
        }
      }
  }

  std::vector<Pixel> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (state[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] == 2)
        edges.push_back({x, y});
  return EdgeMap(w, h, std::move(edges));
}

namespace detail {

/// Lower envelope of parabolas rooted at the finite samples of f.
/// Infinite samples are skipped; an all-infinite input yields all-infinite output.
inline void distance_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    for (;;) {
      const int r = v[static_cast<std::size_t>(k)];
      s = ((f[q] + static_cast<double>(q) * q) - (f[r] + static_cast<double>(r) * r)) / (2.0 * q - 2.0 * r);
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    // k == 0 with s <= z[0] cannot happen since z[0] = -inf.
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    std::fill(d, d + n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int r = v[static_cast<std::size_t>(j)];
    const double dq = q - r;
    d[q] = dq * dq + f[r];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance from every pixel to the nearest edge pixel,
/// by separable lower-envelope passes (columns, then rows). An empty edge set
/// yields an all-zero map.
inline GrayImage squared_distance_transform(const EdgeMap& edges) {
  const int w = edges.width(), h = edges.height();
  if (edges.empty()) return GrayImage(w, h, 0.0);
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), inf);
  for (const auto& p : edges.pixels()) grid[static_cast<std::size_t>(p.y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(p.x)] = 0.0;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> line_in(static_cast<std::size_t>(std::max(w, h)));
  std::vector<double> line_out(line_in.size());
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) line_in[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
    detail::distance_1d(line_in.data(), line_out.data(), h, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] = line_out[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(w);
    std::copy(row, row + w, line_in.begin());
    detail::distance_1d(line_in.data(), row, w, v, z);
  }
  return GrayImage(w, h, std::move(grid));
}

/// Distance to the nearest edge (Euclidean, or squared when requested). Not rescaled.
inline GrayImage distance_map(const EdgeMap& edges, bool squared = false) {
  GrayImage d = squared_distance_transform(edges);
  if (!squared) {
    for (auto& v : d.pixels()) v = std::sqrt(v);
  }
  return d;
}

/// Distance-transform feature map on the [0, 255] scale.
inline GrayImage distance_transform(const EdgeMap& edges, bool squared = false) {
  return rescale_to_255(distance_map(edges, squared));
}

/// Pseudo-color planes: r = intensity, g = relative gradient, b = edge distance.
struct ChannelStack {
  GrayImage r;
  GrayImage g;
  GrayImage b;
};

struct StackOptions {
  CannyConfig canny;
  bool dt_squared = false;
};

/// Each plane is masked to the kidney region first, then rescaled to [0, 255].
inline ChannelStack build_stack(const NormalizedImage& norm, const StackOptions& opts = {}) {
  const BinaryMask& mask = norm.mask;
  GrayImage r = rescale_to_255(apply_mask(norm.image, mask));
  GrayImage g = rescale_to_255(apply_mask(gradient_ratio(r), mask));
  GrayImage b = rescale_to_255(apply_mask(distance_map(canny_edges(r, opts.canny), opts.dt_squared), mask));
  return {std::move(r), std::move(g), std::move(b)};
}

}  // namespace renoscan
