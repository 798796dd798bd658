#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "renoscan/cnn.hpp"
#include "renoscan/descriptors.hpp"
#include "renoscan/error.hpp"
#include "renoscan/featuremaps.hpp"
#include "renoscan/hash.hpp"
#include "renoscan/image_io.hpp"
#include "renoscan/normalize.hpp"
#include "renoscan/parallel.hpp"
#include "renoscan/svm.hpp"

namespace renoscan {

/// Feature families, combined as a bit set. Concatenation order is always CNN, HOG, GEOME.
enum class Family : unsigned { cnn = 1, hog = 2, geome = 4 };

class FeatureSet {
 public:
  constexpr FeatureSet() = default;
  constexpr explicit FeatureSet(unsigned bits) : bits_(bits & 7u) {}

  constexpr bool has(Family f) const { return (bits_ & static_cast<unsigned>(f)) != 0; }
  constexpr unsigned bits() const { return bits_; }
  constexpr bool empty() const { return bits_ == 0; }
  friend constexpr bool operator==(FeatureSet, FeatureSet) = default;

  std::string name() const {
    std::string s;
    auto add = [&](const char* n) { s += (s.empty() ? "" : "+") + std::string(n); };
    if (has(Family::cnn)) add("CNN");
    if (has(Family::hog)) add("HOG");
    if (has(Family::geome)) add("GEOME");
    return s;
  }

  /// Accepts `all`, family names, and `+`-joined combinations, case-insensitively.
  static FeatureSet parse(std::string text) {
    for (auto& ch : text) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (text == "all") return FeatureSet(7u);
    unsigned bits = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t end = std::min(text.find('+', start), text.size());
      const std::string tok = text.substr(start, end - start);
      if (tok == "cnn") bits |= 1u;
      else if (tok == "hog") bits |= 2u;
      else if (tok == "geome" || tok == "geom") bits |= 4u;
      else fail(ErrorKind::validation, "unknown feature set component '" + tok + "'");
      start = end + 1;
    }
    return FeatureSet(bits);
  }

 private:
  unsigned bits_ = 0;
};

/// The seven feature-set columns of the comparison grid, in display order.
inline const std::array<FeatureSet, 7>& comparison_sets() {
  static const std::array<FeatureSet, 7> sets{FeatureSet(1u), FeatureSet(2u), FeatureSet(4u), FeatureSet(6u),
                                              FeatureSet(5u), FeatureSet(3u), FeatureSet(7u)};
  return sets;
}

struct CnnConfig {
  std::string spec_path;     ///< empty: built-in AlexNet topology
  std::string weights_path;  ///< empty: seeded random weights
  std::string tap = cnn::kDefaultTap;
  std::array<float, 3> channel_mean{0.0f, 0.0f, 0.0f};
  bool mean_image = false;
};

struct PipelineConfig {
  NormalizeOptions normalize;
  StackOptions stack;
  std::string hog_channel = "r";
  int hog_bins = 9;
  double hog_clip = 0.2;
  CnnConfig cnn;
  svm::TrainConfig svm;
  int k = 10;
  int repeats = 100;
  std::uint64_t seed = 7;
  bool group_by_subject = false;
  int threads = default_threads();

  HogOptions hog_options() const { return {hog_cell_size(normalize.n0), hog_bins, hog_clip}; }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {
      {"normalize",
       {{"n0", c.normalize.n0},
        {"margin", c.normalize.margin},
        {"scaling", c.normalize.scaling == AxisScaling::anisotropic ? "anisotropic" : "isotropic"}}},
      {"canny", {{"sigma", c.stack.canny.sigma}, {"low_frac", c.stack.canny.low_frac}, {"high_frac", c.stack.canny.high_frac}}},
      {"dt_squared", c.stack.dt_squared},
      {"hog", {{"channel", c.hog_channel}, {"bins", c.hog_bins}, {"clip", c.hog_clip}, {"cell_size", hog_cell_size(c.normalize.n0)}}},
      {"cnn",
       {{"spec", c.cnn.spec_path},
        {"weights", c.cnn.weights_path},
        {"tap", c.cnn.tap},
        {"channel_mean", c.cnn.channel_mean},
        {"mean_image", c.cnn.mean_image}}},
      {"svm",
       {{"c", c.svm.c},
        {"eps", c.svm.eps},
        {"max_iter", c.svm.max_iter},
        {"scaling", svm::to_string(c.svm.scaling)},
        {"bias", c.svm.bias}}},
      {"cv", {{"k", c.k}, {"repeats", c.repeats}, {"seed", c.seed}, {"group_by_subject", c.group_by_subject}}},
  };
}

/// Missing keys keep their defaults.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  try {
    if (auto it = j.find("normalize"); it != j.end()) {
      c.normalize.n0 = it->value("n0", c.normalize.n0);
      c.normalize.margin = it->value("margin", c.normalize.margin);
      const auto s = it->value("scaling", std::string("anisotropic"));
      if (s != "anisotropic" && s != "isotropic") fail(ErrorKind::validation, "config: unknown normalize.scaling " + s);
      c.normalize.scaling = s == "isotropic" ? AxisScaling::isotropic : AxisScaling::anisotropic;
    }
    if (auto it = j.find("canny"); it != j.end()) {
      c.stack.canny.sigma = it->value("sigma", c.stack.canny.sigma);
      c.stack.canny.low_frac = it->value("low_frac", c.stack.canny.low_frac);
      c.stack.canny.high_frac = it->value("high_frac", c.stack.canny.high_frac);
    }
    c.stack.dt_squared = j.value("dt_squared", c.stack.dt_squared);
    if (auto it = j.find("hog"); it != j.end()) {
      c.hog_channel = it->value("channel", c.hog_channel);
      c.hog_bins = it->value("bins", c.hog_bins);
      c.hog_clip = it->value("clip", c.hog_clip);
    }
    if (auto it = j.find("cnn"); it != j.end()) {
      c.cnn.spec_path = it->value("spec", c.cnn.spec_path);
      c.cnn.weights_path = it->value("weights", c.cnn.weights_path);
      c.cnn.tap = it->value("tap", c.cnn.tap);
      if (it->contains("channel_mean")) c.cnn.channel_mean = it->at("channel_mean").get<std::array<float, 3>>();
      c.cnn.mean_image = it->value("mean_image", c.cnn.mean_image);
    }
    if (auto it = j.find("svm"); it != j.end()) {
      c.svm.c = it->value("c", c.svm.c);
      c.svm.eps = it->value("eps", c.svm.eps);
      c.svm.max_iter = it->value("max_iter", c.svm.max_iter);
      c.svm.scaling = svm::scaling_from_string(it->value("scaling", svm::to_string(c.svm.scaling)));
      c.svm.bias = it->value("bias", c.svm.bias);
    }
    if (auto it = j.find("cv"); it != j.end()) {
      c.k = it->value("k", c.k);
      c.repeats = it->value("repeats", c.repeats);
      c.seed = it->value("seed", c.seed);
      c.group_by_subject = it->value("group_by_subject", c.group_by_subject);
    }
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation, std::string("config: ") + e.what());
  }
  if (c.hog_channel != "r" && c.hog_channel != "g" && c.hog_channel != "b")
    fail(ErrorKind::validation, "config: hog.channel must be r, g or b");
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  const auto bytes = io::read_bytes(path);
  try {
    return config_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()), std::move(base));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::validation, path.string() + ": " + e.what());
  }
}

/// Hash of everything that influences outputs (thread count excluded).
inline std::string config_hash(const PipelineConfig& c) { return sha256_hex(to_json(c).dump()); }

}  // namespace renoscan
