#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "renoscan/error.hpp"
#include "renoscan/imaging.hpp"

namespace renoscan {

/// Moment-equivalent ellipse of a binary region.
///
/// Coordinates are pixel indices (x = column, y = row, row increasing downward).
/// `theta` is the major-axis angle from +X, counterclockwise as seen on screen,
/// in (-pi/2, pi/2]. `major`/`minor` are full axis lengths (L1 >= L2 > 0).
struct EllipseFit {
  double cx = 0.0;
  double cy = 0.0;
  double major = 0.0;
  double minor = 0.0;
  double theta = 0.0;
};

inline constexpr std::size_t kMinEllipsePixels = 8;

/// Centroid, orientation and axis lengths from the region's central second moments.
/// Axis lengths are 4*sqrt(eigenvalue) of the moment covariance.
inline EllipseFit fit_ellipse(const BinaryMask& mask) {
  double n = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.inside(x, y)) {
        n += 1.0;
        sx += x;
        sy += y;
      }
  if (n < static_cast<double>(kMinEllipsePixels)) {
    fail(ErrorKind::data, "degenerate region: fewer than 8 inside pixels");
  }
  const double cx = sx / n, cy = sy / n;
  double m20 = 0.0, m02 = 0.0, m11 = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.inside(x, y)) {
        const double dx = x - cx, dy = y - cy;
        m20 += dx * dx;
        m02 += dy * dy;
        m11 += dx * dy;
      }
  m20 /= n;
  m02 /= n;
  m11 /= n;

  const double half_sum = 0.5 * (m20 + m02);
  const double root = std::hypot(0.5 * (m20 - m02), m11);
  const double lambda_max = half_sum + root;
  const double lambda_min = half_sum - root;
  if (!(lambda_min > 1e-9 * lambda_max) || !(lambda_max > 0.0)) {
    fail(ErrorKind::data, "degenerate region: inside pixels are collinear");
  }

  // Flip the row axis so the angle is counterclockwise on screen.
  double theta = 0.5 * std::atan2(-2.0 * m11, m20 - m02);
  if (theta <= -std::numbers::pi / 2) theta += std::numbers::pi;

  return {cx, cy, 4.0 * std::sqrt(lambda_max), 4.0 * std::sqrt(lambda_min), theta};
}

enum class AxisScaling {
  anisotropic,  ///< L1 and L2 each map to margin*n0
  isotropic,    ///< L1 maps to margin*n0, aspect ratio preserved
};

struct NormalizeOptions {
  int n0 = 227;
  double margin = 0.9;
  AxisScaling scaling = AxisScaling::anisotropic;
};

struct NormalizedImage {
  GrayImage image;
  BinaryMask mask;
  EllipseFit source_fit;
};

namespace detail {

inline double sample_bilinear(const GrayImage& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  auto at = [&](int xx, int yy) { return img.contains(xx, yy) ? img(xx, yy) : 0.0; };
  const double top = (1.0 - ax) * at(x0, y0) + ax * at(x0 + 1, y0);
  const double bottom = (1.0 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1);
  return (1.0 - ay) * top + ay * bottom;
}

inline bool sample_nearest(const BinaryMask& mask, double x, double y) {
  const int xi = static_cast<int>(std::lround(x)), yi = static_cast<int>(std::lround(y));
  return mask.contains(xi, yi) && mask.inside(xi, yi);
}

}  // namespace detail

/// Resamples the kidney into an n0 x n0 frame: ellipse center to frame center,
/// major axis along +X, axes scaled to margin*n0, background zeroed.
inline NormalizedImage normalize_kidney(const GrayImage& img, const BinaryMask& mask, const EllipseFit& fit,
                                        const NormalizeOptions& opts = {}) {
  if (!mask.same_shape(img)) throw std::invalid_argument("normalize_kidney: image and mask dimensions differ");
  if (opts.n0 < 32) throw std::invalid_argument("normalize_kidney: n0 must be >= 32");
  if (!(opts.margin > 0.0)) throw std::invalid_argument("normalize_kidney: margin must be positive");
  if (!(fit.major >= fit.minor && fit.minor > 0.0)) {
    throw std::invalid_argument("normalize_kidney: invalid ellipse axes");
  }

  const int n0 = opts.n0;
  const double target = opts.margin * n0;
  const double step_major = fit.major / target;
  const double step_minor =
      opts.scaling == AxisScaling::anisotropic ? fit.minor / target : step_major;

  // Output +X follows the major axis, output +row follows the perpendicular (proper rotation).
  const double c = std::cos(fit.theta), s = std::sin(fit.theta);
  const double e1x = c, e1y = -s;
  const double e2x = s, e2y = c;
  const double center = 0.5 * (n0 - 1);

  GrayImage out(n0, n0, 0.0);
  BinaryMask out_mask(n0, n0, false);
  for (int v = 0; v < n0; ++v) {
    const double dv = (v - center) * step_minor;
    for (int u = 0; u < n0; ++u) {
      const double du = (u - center) * step_major;
      const double x = fit.cx + du * e1x + dv * e2x;
      const double y = fit.cy + du * e1y + dv * e2y;
      if (detail::sample_nearest(mask, x, y)) {
        out_mask.set(u, v, true);
        out(u, v) = detail::sample_bilinear(img, x, y);
      }
    }
  }
  return {apply_mask(out, out_mask), std::move(out_mask), fit};
}

}  // namespace renoscan
