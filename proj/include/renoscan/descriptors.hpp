#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "renoscan/error.hpp"
#include "renoscan/imaging.hpp"
#include "renoscan/normalize.hpp"

namespace renoscan {

struct HogOptions {
  int cell_size = 22;
  int bins = 9;
  double clip = 0.2;
};

/// Cell size rule for an n0 x n0 frame: floor(n0 / 10).
inline int hog_cell_size(int n0) { return std::max(1, n0 / 10); }

/// Cell-level HOG. Each cell carries `bins` values for each of the four 2x2
/// blocks that contain it, so bins_per_cell == 4 * bins.
struct HogDescriptor {
  int cells_x = 0;
  int cells_y = 0;
  int bins = 0;
  int bins_per_cell = 0;
  std::vector<double> values;

  double at(int cx, int cy, int block, int bin) const {
    return values[((static_cast<std::size_t>(cy) * static_cast<std::size_t>(cells_x) + static_cast<std::size_t>(cx)) * 4 +
                   static_cast<std::size_t>(block)) * static_cast<std::size_t>(bins) + static_cast<std::size_t>(bin)];
  }
};

inline std::size_t hog_length(int width, int height, const HogOptions& opts) {
  return static_cast<std::size_t>(width / opts.cell_size) * static_cast<std::size_t>(height / opts.cell_size) * 4u *
         static_cast<std::size_t>(opts.bins);
}

/// Dalal-Triggs HOG: unsigned orientations with bin centers at k*pi/bins,
/// bilinear votes in orientation and cell position, L2-hysteresis over 2x2
/// cell blocks. Pixels past the last whole cell are ignored. Zero blocks stay zero.
inline HogDescriptor hog(const GrayImage& img, const HogOptions& opts = {}) {
  if (opts.cell_size < 1 || opts.bins < 1) throw std::invalid_argument("hog: cell_size and bins must be >= 1");
  const int cs = opts.cell_size, nb = opts.bins;
  const int ncx = img.width() / cs, ncy = img.height() / cs;
  HogDescriptor out{ncx, ncy, nb, 4 * nb, {}};
  if (ncx == 0 || ncy == 0) return out;

  std::vector<double> hist(static_cast<std::size_t>(ncx) * static_cast<std::size_t>(ncy) * static_cast<std::size_t>(nb), 0.0);
  auto cell = [&](int cx, int cy) {
    return hist.data() + (static_cast<std::size_t>(cy) * static_cast<std::size_t>(ncx) + static_cast<std::size_t>(cx)) * static_cast<std::size_t>(nb);
  };
  const double bin_width = std::numbers::pi / nb;

  for (int y = 0; y < ncy * cs; ++y) {
    const double fy = (y + 0.5) / cs - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    const double wy1 = fy - iy;
    for (int x = 0; x < ncx * cs; ++x) {
      const double gx = img.clamped(x + 1, y) - img.clamped(x - 1, y);
      const double gy = img.clamped(x, y + 1) - img.clamped(x, y - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx);
      if (ang < 0.0) ang += std::numbers::pi;
      if (ang >= std::numbers::pi) ang -= std::numbers::pi;
      const double t = ang / bin_width;
      const int b0 = static_cast<int>(std::floor(t)) % nb;
      const int b1 = (b0 + 1) % nb;
      const double wb1 = t - std::floor(t);

      const double fx = (x + 0.5) / cs - 0.5;
      const int ix = static_cast<int>(std::floor(fx));
      const double wx1 = fx - ix;
      for (int dy = 0; dy < 2; ++dy) {
        const int cy = iy + dy;
        if (cy < 0 || cy >= ncy) continue;
        const double wy = dy ? wy1 : 1.0 - wy1;
        for (int dx = 0; dx < 2; ++dx) {
          const int cx = ix + dx;
          if (cx < 0 || cx >= ncx) continue;
          const double w = mag * wy * (dx ? wx1 : 1.0 - wx1);
          double* h = cell(cx, cy);
          h[b0] += w * (1.0 - wb1);
          h[b1] += w * wb1;
        }
      }
    }
  }

  // Blocks are indexed by their top-left cell in [-1, n-1]; cells outside the grid count as zero.
  const int nbx = ncx + 1, nby = ncy + 1;
  std::vector<double> first_norm(static_cast<std::size_t>(nbx) * static_cast<std::size_t>(nby), 0.0);
  std::vector<double> second_norm(first_norm.size(), 0.0);
  for (int by = -1; by < ncy; ++by)
    for (int bx = -1; bx < ncx; ++bx) {
      double ss = 0.0;
      for (int cy = by; cy <= by + 1; ++cy)
        for (int cx = bx; cx <= bx + 1; ++cx) {
          if (cx < 0 || cy < 0 || cx >= ncx || cy >= ncy) continue;
          const double* h = cell(cx, cy);
          for (int b = 0; b < nb; ++b) ss += h[b] * h[b];
        }
      const std::size_t bi = static_cast<std::size_t>(by + 1) * static_cast<std::size_t>(nbx) + static_cast<std::size_t>(bx + 1);
      if (ss == 0.0) continue;
      const double n1 = std::sqrt(ss);
      double ss2 = 0.0;
      for (int cy = by; cy <= by + 1; ++cy)
        for (int cx = bx; cx <= bx + 1; ++cx) {
          if (cx < 0 || cy < 0 || cx >= ncx || cy >= ncy) continue;
          const double* h = cell(cx, cy);
          for (int b = 0; b < nb; ++b) {
            const double c = std::min(h[b] / n1, opts.clip);
            ss2 += c * c;
          }
        }
      first_norm[bi] = n1;
      second_norm[bi] = std::sqrt(ss2);
    }

  out.values.assign(hog_length(img.width(), img.height(), opts), 0.0);
  std::size_t k = 0;
  for (int cy = 0; cy < ncy; ++cy)
    for (int cx = 0; cx < ncx; ++cx) {
      const double* h = cell(cx, cy);
      for (int blk = 0; blk < 4; ++blk) {
        const int bx = cx - 1 + (blk & 1), by = cy - 1 + (blk >> 1);
        const std::size_t bi = static_cast<std::size_t>(by + 1) * static_cast<std::size_t>(nbx) + static_cast<std::size_t>(bx + 1);
        const double n1 = first_norm[bi], n2 = second_norm[bi];
        for (int b = 0; b < nb; ++b, ++k) {
          out.values[k] = (n1 > 0.0 && n2 > 0.0) ? std::min(h[b] / n1, opts.clip) / n2 : 0.0;
        }
      }
    }
  if (out.values.size() != static_cast<std::size_t>(out.cells_x) * static_cast<std::size_t>(out.cells_y) *
                               static_cast<std::size_t>(out.bins_per_cell)) {
    throw std::logic_error("hog: descriptor length does not match grid geometry");
  }
  return out;
}

inline constexpr int kShapeFeatureCount = 8;
inline constexpr int kBlockFeatureCount = 10;
inline constexpr int kGeometricFeatureCount = kShapeFeatureCount + kBlockFeatureCount;

/// Shape measures of the fitted ellipse and dark-hole area ratios of the kidney.
struct GeometricFeatures {
  std::array<double, kShapeFeatureCount> v_shape{};
  std::array<double, kBlockFeatureCount> v_block{};

  std::vector<double> flatten() const {
    std::vector<double> v(v_shape.begin(), v_shape.end());
    v.insert(v.end(), v_block.begin(), v_block.end());
    return v;
  }
};

/// [L1, L2, L1/L2, L1*L2, L1+L2, L1^2+L2^2, L1-L2, L1^2-L2^2]
inline std::array<double, kShapeFeatureCount> shape_features(double l1, double l2) {
  return {l1, l2, l1 / l2, l1 * l2, l1 + l2, l1 * l1 + l2 * l2, l1 - l2, l1 * l1 - l2 * l2};
}

/// Hole threshold for block feature i (0-based): 3, 6, ..., 30.
inline constexpr double hole_threshold(int i) { return 3.0 * (i + 1); }

/// `fit` is the ellipse of the original-resolution mask; `img` and `mask` are the
/// normalized kidney on the [0, 255] scale. A hole pixel is an inside pixel
/// strictly below the threshold.
inline GeometricFeatures geometric_features(const GrayImage& img, const BinaryMask& mask, const EllipseFit& fit) {
  if (!mask.same_shape(img)) throw std::invalid_argument("geometric_features: image and mask dimensions differ");
  GeometricFeatures gf;
  gf.v_shape = shape_features(fit.major, fit.minor);
  std::array<std::size_t, kBlockFeatureCount> below{};
  std::size_t inside = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (!mask.inside(x, y)) continue;
      ++inside;
      const double v = img(x, y);
      for (int i = 0; i < kBlockFeatureCount; ++i)
        if (v < hole_threshold(i)) ++below[static_cast<std::size_t>(i)];
    }
  if (inside == 0) fail(ErrorKind::data, "geometric_features: mask has zero area");
  for (int i = 0; i < kBlockFeatureCount; ++i)
    gf.v_block[static_cast<std::size_t>(i)] = static_cast<double>(below[static_cast<std::size_t>(i)]) / static_cast<double>(inside);
  return gf;
}

}  // namespace renoscan
