#pragma once

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "renoscan/error.hpp"
#include "renoscan/imaging.hpp"

namespace renoscan::io {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write through a temporary sibling then rename, so readers never observe a partial file.
inline void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  static std::atomic<unsigned long> counter{0};
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "_" +
         std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::data, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::data, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_bytes_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

struct Raster8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

namespace detail {

inline bool is_pgm(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5';
}

inline Raster8 decode_pgm(std::span<const std::uint8_t> bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long value = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) fail(ErrorKind::data, name + ": malformed PGM header");
    return value;
  };
  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  ++pos;  // single whitespace before raster
  if (w < 1 || h < 1) fail(ErrorKind::data, name + ": bad PGM dimensions");
  if (maxval < 1 || maxval > 255) fail(ErrorKind::data, name + ": only 8-bit PGM is supported");
  const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() < pos + n) fail(ErrorKind::data, name + ": truncated PGM raster");
  Raster8 r{static_cast<int>(w), static_cast<int>(h), {}};
  r.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (maxval != 255) {
    for (auto& v : r.data) v = static_cast<std::uint8_t>(std::lround(255.0 * v / static_cast<double>(maxval)));
  }
  return r;
}

inline Raster8 decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorKind::data, name + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  Raster8 r{static_cast<int>(image.width), static_cast<int>(image.height), {}};
  r.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::data, name + ": " + msg);
  }
  return r;
}

inline std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

/// Decodes an 8-bit grayscale PNG or binary PGM (P5) from memory.
inline Raster8 decode_raster(std::span<const std::uint8_t> bytes, const std::string& name = "image") {
  return detail::is_pgm(bytes) ? detail::decode_pgm(bytes, name) : detail::decode_png(bytes, name);
}

inline GrayImage to_image(const Raster8& r) {
  std::vector<double> data(r.data.begin(), r.data.end());
  return GrayImage(r.width, r.height, std::move(data));
}

/// Pixels with value >= 128 are inside.
inline BinaryMask to_mask(const Raster8& r) {
  BinaryMask m(r.width, r.height);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      m.set(x, y, r.data[static_cast<std::size_t>(y) * static_cast<std::size_t>(r.width) + static_cast<std::size_t>(x)] >= 128);
  return m;
}

inline GrayImage load_image(const std::filesystem::path& path) {
  return to_image(decode_raster(read_bytes(path), path.string()));
}

inline BinaryMask load_mask(const std::filesystem::path& path) {
  return to_mask(decode_raster(read_bytes(path), path.string()));
}

inline std::vector<std::uint8_t> encode_png(int width, int height, int channels, std::span<const std::uint8_t> data) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data.data(), 0, nullptr)) {
    fail(ErrorKind::data, std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data.data(), 0, nullptr)) {
    fail(ErrorKind::data, std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

/// Intensities are rounded and clamped to 8 bits here and only here.
inline std::vector<std::uint8_t> quantize(const GrayImage& img) {
  std::vector<std::uint8_t> q(img.size());
  const auto px = img.pixels();
  std::transform(px.begin(), px.end(), q.begin(), detail::quantize);
  return q;
}

inline void save_png(const std::filesystem::path& path, const GrayImage& img) {
  write_bytes_atomic(path, encode_png(img.width(), img.height(), 1, quantize(img)));
}

inline void save_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> q(mask.size());
  const auto bits = mask.bits();
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = bits[i] ? 255 : 0;
  write_bytes_atomic(path, encode_png(mask.width(), mask.height(), 1, q));
}

inline void save_rgb_png(const std::filesystem::path& path, const GrayImage& r, const GrayImage& g, const GrayImage& b) {
  if (!r.same_shape(g) || !r.same_shape(b)) throw std::invalid_argument("save_rgb_png: plane shapes differ");
  std::vector<std::uint8_t> q(r.size() * 3);
  const auto pr = r.pixels(), pg = g.pixels(), pb = b.pixels();
  for (std::size_t i = 0; i < r.size(); ++i) {
    q[3 * i] = detail::quantize(pr[i]);
    q[3 * i + 1] = detail::quantize(pg[i]);
    q[3 * i + 2] = detail::quantize(pb[i]);
  }
  write_bytes_atomic(path, encode_png(r.width(), r.height(), 3, q));
}

inline void save_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ostringstream header;
  header << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  const auto q = quantize(img);
  bytes.insert(bytes.end(), q.begin(), q.end());
  write_bytes_atomic(path, bytes);
}

}  // namespace renoscan::io
