#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "renoscan/eval.hpp"
#include "renoscan/image_io.hpp"
#include "renoscan/imaging.hpp"
#include "renoscan/seed.hpp"
#include "renoscan/table.hpp"

namespace renoscan {

/// Filled ellipse with semi-axes (a, b), major axis at `theta` counterclockwise on screen.
inline BinaryMask rasterize_ellipse(int width, int height, double cx, double cy, double a, double b, double theta) {
  BinaryMask m(width, height);
  const double c = std::cos(theta), s = std::sin(theta);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx, dy_up = -(y - cy);
      const double u = dx * c + dy_up * s;
      const double v = -dx * s + dy_up * c;
      if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) m.set(x, y, true);
    }
  return m;
}

enum class PhantomMode {
  holes,       ///< class +1: dark holes and a flatter aspect ratio
  shape_only,  ///< classes differ only in kidney size; noise-free texture
};

struct PhantomConfig {
  int count = 100;
  int width = 256;
  int height = 256;
  std::uint64_t seed = 7;
  PhantomMode mode = PhantomMode::holes;
};

struct Phantom {
  std::string sample_id;
  std::string subject_id;
  eval::Side side = eval::Side::left;
  int label = -1;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double theta = 0.0;
  int holes = 0;
  GrayImage image;
  BinaryMask mask;
};

/// Kidney `index` of the corpus. Subjects contribute a left and a right kidney;
/// the first half of the subjects are label -1.
inline Phantom make_phantom(const PhantomConfig& cfg, int index) {
  const int subjects = (cfg.count + 1) / 2;
  const int subject = index / 2;
  Phantom p;
  p.subject_id = "subj" + indexed_name("", static_cast<std::size_t>(subject), static_cast<std::size_t>(subjects));
  p.side = index % 2 == 0 ? eval::Side::left : eval::Side::right;
  p.sample_id = p.subject_id + (p.side == eval::Side::left ? "_L" : "_R");
  p.label = subject < subjects / 2 ? -1 : 1;

  std::mt19937_64 rng(derive_seed(cfg.seed, "phantom", static_cast<std::uint64_t>(index)));
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> noise(0.0, 1.0);

  const bool positive = p.label > 0;
  if (cfg.mode == PhantomMode::holes) {
    p.semi_major = uni(55.0, 75.0);
    p.semi_minor = p.semi_major * (positive ? uni(0.40, 0.52) : uni(0.50, 0.62));
  } else {
    p.semi_major = positive ? uni(48.0, 58.0) : uni(62.0, 72.0);
    p.semi_minor = p.semi_major * uni(0.50, 0.60);
  }
  p.theta = uni(-std::numbers::pi / 2, std::numbers::pi / 2);
  const double scale = std::min(cfg.width, cfg.height) / 256.0;
  p.semi_major *= scale;
  p.semi_minor *= scale;
  const double cx = 0.5 * cfg.width + uni(-12.0, 12.0) * scale;
  const double cy = 0.5 * cfg.height + uni(-12.0, 12.0) * scale;
  p.mask = rasterize_ellipse(cfg.width, cfg.height, cx, cy, p.semi_major, p.semi_minor, p.theta);

  const double phase_u = uni(0.0, 6.28), phase_v = uni(0.0, 6.28);
  const double grain = cfg.mode == PhantomMode::holes ? 10.0 : 0.0;
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  p.image = GrayImage(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      double v = 0.0;
      if (p.mask.inside(x, y)) {
        // texture lives in kidney coordinates
        const double dx = x - cx, dy_up = -(y - cy);
        const double u = (dx * c + dy_up * s) / p.semi_major;
        const double w = (-dx * s + dy_up * c) / p.semi_minor;
        v = 150.0 + 25.0 * std::sin(9.0 * u + phase_u) * std::cos(7.0 * w + phase_v) + grain * noise(rng);
      } else {
        v = 40.0 + 6.0 * noise(rng);
      }
      p.image(x, y) = std::clamp(v, 0.0, 255.0);
    }

  if (cfg.mode == PhantomMode::holes && positive) {
    p.holes = std::uniform_int_distribution<int>(3, 6)(rng);
    for (int h = 0; h < p.holes; ++h) {
      const double r = uni(4.0, 8.0) * scale;
      const double ang = uni(0.0, 2.0 * std::numbers::pi), rad = 0.55 * std::sqrt(uni(0.0, 1.0));
      const double u = rad * std::cos(ang) * p.semi_major, w = rad * std::sin(ang) * p.semi_minor;
      const double hx = cx + u * c - w * s;
      const double hy = cy - (u * s + w * c);
      for (int y = std::max(0, static_cast<int>(hy - r) - 1); y <= std::min(cfg.height - 1, static_cast<int>(hy + r) + 1); ++y)
        for (int x = std::max(0, static_cast<int>(hx - r) - 1); x <= std::min(cfg.width - 1, static_cast<int>(hx + r) + 1); ++x)
          if ((x - hx) * (x - hx) + (y - hy) * (y - hy) <= r * r && p.mask.inside(x, y))
            p.image(x, y) = std::clamp(uni(0.0, 6.0), 0.0, 255.0);
    }
  }
  return p;
}

/// Writes images/, masks/, manifest.csv and truth.csv under `dir`; returns the manifest.
inline Manifest write_phantom_corpus(const std::filesystem::path& dir, const PhantomConfig& cfg) {
  if (cfg.count < 2) throw std::invalid_argument("phantom corpus needs at least 2 kidneys");
  Manifest m;
  std::string truth = "sample_id,label,semi_major,semi_minor,theta,holes\n";
  for (int i = 0; i < cfg.count; ++i) {
    const Phantom p = make_phantom(cfg, i);
    const std::filesystem::path img = std::filesystem::path("images") / (p.sample_id + ".png");
    const std::filesystem::path msk = std::filesystem::path("masks") / (p.sample_id + ".png");
    io::save_png(dir / img, p.image);
    io::save_png(dir / msk, p.mask);
    m.rows.push_back({p.sample_id, p.subject_id, p.side, p.label, img, msk});
    truth += p.sample_id + "," + std::to_string(p.label) + "," + format_double(p.semi_major) + "," +
             format_double(p.semi_minor) + "," + format_double(p.theta) + "," + std::to_string(p.holes) + "\n";
  }
  io::write_text_atomic(dir / "manifest.csv", manifest_csv(m));
  io::write_text_atomic(dir / "truth.csv", truth);
  for (auto& row : m.rows) {
    row.image_path = dir / row.image_path;
    row.mask_path = dir / row.mask_path;
  }
  return m;
}

}  // namespace renoscan
