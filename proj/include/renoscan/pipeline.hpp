#pragma once

#include <cstring>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "renoscan/cnn.hpp"
#include "renoscan/config.hpp"
#include "renoscan/descriptors.hpp"
#include "renoscan/eval.hpp"
#include "renoscan/featuremaps.hpp"
#include "renoscan/hash.hpp"
#include "renoscan/image_io.hpp"
#include "renoscan/normalize.hpp"
#include "renoscan/parallel.hpp"
#include "renoscan/seed.hpp"
#include "renoscan/table.hpp"
#include "renoscan/version.hpp"

namespace renoscan {

struct StageStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
};

/// Cache accounting per stage name ("stack", "cnn", "hog", "geome").
class RunStats {
 public:
  void record(const std::string& stage, bool hit) {
    std::lock_guard lock(mutex_);
    auto& s = stages_[stage];
    (hit ? s.hits : s.misses) += 1;
  }
  std::map<std::string, StageStats> snapshot() const {
    std::lock_guard lock(mutex_);
    return stages_;
  }
  bool all_hits() const {
    std::lock_guard lock(mutex_);
    for (const auto& [_, s] : stages_)
      if (s.misses != 0) return false;
    return true;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, StageStats> stages_;
};

/// Normalized kidney plus its pseudo-color planes; the input to every feature family.
struct PreparedKidney {
  EllipseFit fit;  ///< of the original-resolution mask
  BinaryMask mask;
  ChannelStack stack;
};

inline PreparedKidney prepare_kidney(const GrayImage& img, const BinaryMask& mask, const PipelineConfig& cfg) {
  if (!mask.same_shape(img)) fail(ErrorKind::data, "image and mask dimensions differ");
  const EllipseFit fit = fit_ellipse(mask);
  NormalizedImage norm = normalize_kidney(img, mask, fit, cfg.normalize);
  ChannelStack stack = build_stack(norm, cfg.stack);
  return {fit, std::move(norm.mask), std::move(stack)};
}

namespace detail {

template <typename T>
void put_raw(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_raw(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) fail(ErrorKind::data, "cache: truncated stack blob");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

inline std::vector<std::uint8_t> encode_prepared(const PreparedKidney& k) {
  std::vector<std::uint8_t> out{'R', 'S', 'T', 'K', '1'};
  const std::int32_t w = k.mask.width(), h = k.mask.height();
  put_raw(out, w);
  put_raw(out, h);
  for (double v : {k.fit.cx, k.fit.cy, k.fit.major, k.fit.minor, k.fit.theta}) put_raw(out, v);
  out.insert(out.end(), k.mask.bits().begin(), k.mask.bits().end());
  for (const GrayImage* plane : {&k.stack.r, &k.stack.g, &k.stack.b})
    for (double v : plane->pixels()) put_raw(out, v);
  return out;
}

inline PreparedKidney decode_prepared(std::span<const std::uint8_t> in) {
  if (in.size() < 5 || std::memcmp(in.data(), "RSTK1", 5) != 0) fail(ErrorKind::data, "cache: bad stack blob");
  std::size_t pos = 5;
  const int w = get_raw<std::int32_t>(in, pos), h = get_raw<std::int32_t>(in, pos);
  PreparedKidney k;
  k.fit.cx = get_raw<double>(in, pos);
  k.fit.cy = get_raw<double>(in, pos);
  k.fit.major = get_raw<double>(in, pos);
  k.fit.minor = get_raw<double>(in, pos);
  k.fit.theta = get_raw<double>(in, pos);
  k.mask = BinaryMask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) k.mask.set(x, y, get_raw<std::uint8_t>(in, pos) != 0);
  for (GrayImage* plane : {&k.stack.r, &k.stack.g, &k.stack.b}) {
    std::vector<double> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    for (auto& v : px) v = get_raw<double>(in, pos);
    *plane = GrayImage(w, h, std::move(px));
  }
  return k;
}

}  // namespace detail

/// Per-row failure collected during extraction.
struct RowFailure {
  std::string sample_id;
  ErrorKind kind = ErrorKind::data;
  std::string message;
};

/// Turns manifest rows into feature vectors, caching the prepared kidney and
/// each feature family under content-hash keys when a cache directory is set.
class FeatureExtractor {
 public:
  FeatureExtractor(PipelineConfig cfg, std::filesystem::path cache_dir = {})
      : cfg_(std::move(cfg)), cache_dir_(std::move(cache_dir)) {
    stack_cfg_ = nlohmann::json{{"normalize", to_json(cfg_)["normalize"]},
                                {"canny", to_json(cfg_)["canny"]},
                                {"dt_squared", cfg_.stack.dt_squared}}
                     .dump();
    hog_cfg_ = to_json(cfg_)["hog"].dump();
  }

  const PipelineConfig& config() const noexcept { return cfg_; }

  /// Feature names for `set`, in concatenation order.
  std::vector<std::string> schema(FeatureSet set) {
    std::vector<std::string> names;
    if (set.has(Family::cnn)) {
      ensure_cnn();
      const auto shapes = cnn::infer_shapes(spec_);
      std::size_t dims = 0;
      for (std::size_t i = 0; i < spec_.layers.size(); ++i)
        if (spec_.layers[i].name == cfg_.cnn.tap) dims = shapes[i].count();
      auto n = family_names(Family::cnn, dims);
      names.insert(names.end(), n.begin(), n.end());
    }
    if (set.has(Family::hog)) {
      const auto n = family_names(Family::hog, hog_length(cfg_.normalize.n0, cfg_.normalize.n0, cfg_.hog_options()));
      names.insert(names.end(), n.begin(), n.end());
    }
    if (set.has(Family::geome)) {
      const auto n = family_names(Family::geome, kGeometricFeatureCount);
      names.insert(names.end(), n.begin(), n.end());
    }
    return names;
  }

  std::vector<double> extract(const ManifestRow& row, FeatureSet set, RunStats& stats) {
    const auto image_bytes = io::read_bytes(row.image_path);
    const auto mask_bytes = io::read_bytes(row.mask_path);
    const std::string input_hash = Sha256().update(image_bytes).update("|").update(mask_bytes).hex();
    const std::string stack_key = Sha256().update(kToolVersion).update(input_hash).update(stack_cfg_).hex();

    std::optional<PreparedKidney> prepared;
    auto get_prepared = [&]() -> const PreparedKidney& {
      if (prepared) return *prepared;
      const auto path = cache_path("stack", stack_key, ".bin");
      if (!path.empty() && std::filesystem::exists(path)) {
        prepared = detail::decode_prepared(io::read_bytes(path));
        stats.record("stack", true);
      } else {
        const GrayImage img = io::to_image(io::decode_raster(image_bytes, row.image_path.string()));
        const BinaryMask mask = io::to_mask(io::decode_raster(mask_bytes, row.mask_path.string()));
        prepared = prepare_kidney(img, mask, cfg_);
        if (!path.empty()) io::write_bytes_atomic(path, detail::encode_prepared(*prepared));
        stats.record("stack", false);
      }
      return *prepared;
    };

    std::vector<double> out;
    auto family = [&](const std::string& stage, const std::string& family_cfg, auto&& compute) {
      const std::string key = Sha256().update(stack_key).update(stage).update(family_cfg).hex();
      const auto path = cache_path(stage, key, ".json");
      std::vector<double> values;
      if (!path.empty() && std::filesystem::exists(path)) {
        const auto bytes = io::read_bytes(path);
        values = nlohmann::json::parse(bytes.begin(), bytes.end()).at("values").get<std::vector<double>>();
        stats.record(stage, true);
      } else {
        values = compute(get_prepared());
        for (double v : values)
          if (!std::isfinite(v)) fail(ErrorKind::numeric, stage + " features contain non-finite values");
        if (!path.empty()) {
          nlohmann::json j{{"tool_version", kToolVersion}, {"key", key}, {"values", values}};
          io::write_text_atomic(path, j.dump() + "\n");
        }
        stats.record(stage, false);
      }
      out.insert(out.end(), values.begin(), values.end());
    };

    if (set.has(Family::cnn)) {
      ensure_cnn();
      family("cnn", cnn_cfg_, [&](const PreparedKidney& k) {
        cnn::ForwardOptions fo;
        fo.tap = cfg_.cnn.tap;
        fo.channel_mean = cfg_.cnn.channel_mean;
        fo.use_mean_image = cfg_.cnn.mean_image;
        const auto act = cnn::forward(spec_, weights_, k.stack, fo);
        return std::vector<double>(act.begin(), act.end());
      });
    }
    if (set.has(Family::hog)) {
      family("hog", hog_cfg_, [&](const PreparedKidney& k) {
        const GrayImage& plane = cfg_.hog_channel == "g" ? k.stack.g : cfg_.hog_channel == "b" ? k.stack.b : k.stack.r;
        return hog(plane, cfg_.hog_options()).values;
      });
    }
    if (set.has(Family::geome)) {
      family("geome", stack_cfg_, [&](const PreparedKidney& k) {
        return geometric_features(k.stack.r, k.mask, k.fit).flatten();
      });
    }
    return out;
  }

 private:
  std::filesystem::path cache_path(const std::string& stage, const std::string& key, const char* ext) const {
    if (cache_dir_.empty()) return {};
    return cache_dir_ / stage / (key + ext);
  }

  void ensure_cnn() {
    std::call_once(cnn_once_, [&] {
      if (cfg_.cnn.spec_path.empty()) {
        spec_ = cnn::alexnet_spec();
        if (cfg_.normalize.n0 != spec_.input.height)
          fail(ErrorKind::validation, "the built-in network needs n0 = 227; supply a network spec for n0 = " +
                                          std::to_string(cfg_.normalize.n0));
      } else {
        spec_ = cnn::load_spec(cfg_.cnn.spec_path);
      }
      if (spec_.input != cnn::Shape{cfg_.normalize.n0, cfg_.normalize.n0, 3})
        fail(ErrorKind::validation, "network input " + cnn::to_string(spec_.input) + " does not match n0 x n0 x 3");
      std::string weights_id;
      if (cfg_.cnn.weights_path.empty()) {
        const auto seed = derive_seed(cfg_.seed, "cnn-weights");
        weights_ = cnn::random_weights(spec_, seed);
        weights_id = "random:" + std::to_string(seed);
      } else {
        const std::filesystem::path dir(cfg_.cnn.weights_path);
        weights_ = cnn::load_weights(dir);
        weights_id = Sha256().update(io::read_bytes(dir / "manifest.json")).update(io::read_bytes(dir / "weights.bin")).hex();
      }
      cnn::validate(weights_, spec_);
      cnn_cfg_ = nlohmann::json{{"spec", cnn::to_json(spec_)},
                                {"weights", weights_id},
                                {"tap", cfg_.cnn.tap},
                                {"channel_mean", cfg_.cnn.channel_mean},
                                {"mean_image", cfg_.cnn.mean_image}}
                     .dump();
    });
  }

  PipelineConfig cfg_;
  std::filesystem::path cache_dir_;
  std::string stack_cfg_;
  std::string hog_cfg_;
  std::string cnn_cfg_;
  std::once_flag cnn_once_;
  cnn::NetworkSpec spec_;
  cnn::WeightArchive weights_;
};

struct ExtractionResult {
  eval::Dataset data;
  std::vector<RowFailure> failures;
};

/// Extracts `set` for every manifest row, rows in parallel. Failed rows are
/// reported, not thrown.
inline ExtractionResult extract_features(const Manifest& manifest, FeatureExtractor& extractor, FeatureSet set,
                                         RunStats& stats) {
  if (set.empty()) fail(ErrorKind::validation, "empty feature set");
  ExtractionResult res;
  res.data.feature_names = extractor.schema(set);
  const std::size_t n = manifest.rows.size();
  std::vector<std::optional<eval::Sample>> samples(n);
  std::vector<std::optional<RowFailure>> failures(n);
  parallel_for(n, extractor.config().threads, [&](std::size_t i) {
    const auto& row = manifest.rows[i];
    try {
      eval::Sample s{row.sample_id, row.subject_id, row.side, row.label, extractor.extract(row, set, stats)};
      if (s.features.size() != res.data.feature_names.size())
        fail(ErrorKind::validation, "feature length does not match the schema for " + set.name());
      samples[i] = std::move(s);
    } catch (const Error& e) {
      failures[i] = RowFailure{row.sample_id, e.kind(), e.what()};
    } catch (const std::exception& e) {
      failures[i] = RowFailure{row.sample_id, ErrorKind::data, e.what()};
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (samples[i]) res.data.samples.push_back(std::move(*samples[i]));
    if (failures[i]) res.failures.push_back(std::move(*failures[i]));
  }
  return res;
}

inline eval::CvConfig cv_config(const PipelineConfig& cfg) {
  eval::CvConfig cv;
  cv.k = cfg.k;
  cv.repeats = cfg.repeats;
  cv.seed = cfg.seed;
  cv.trainer = cfg.svm;
  cv.group_by_subject = cfg.group_by_subject;
  cv.threads = cfg.threads;
  return cv;
}

inline nlohmann::json report_json(const eval::CvReport& rep, const std::string& feature_set, eval::SideFilter side,
                                  const std::string& hash) {
  nlohmann::json j = eval::to_json(rep);
  j["tool"] = kToolName;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = hash;
  j["feature_set"] = feature_set;
  j["side"] = eval::to_string(side);
  return j;
}

inline std::string roc_csv(const eval::CvReport& rep, const std::string& hash) {
  std::string out = provenance_line(hash) + "\nthreshold,fpr,tpr\n";
  for (const auto& p : rep.roc)
    out += (std::isfinite(p.threshold) ? format_double(p.threshold) : std::string("inf")) + "," + format_double(p.fpr) +
           "," + format_double(p.tpr) + "\n";
  return out;
}

struct PipelineResult {
  eval::Dataset data;
  std::vector<RowFailure> failures;
  std::map<std::string, StageStats> stages;
  std::map<std::string, eval::CvReport> reports;  ///< keyed by side name
};

inline std::string describe_failures(const std::vector<RowFailure>& failures) {
  std::string msg = std::to_string(failures.size()) + " row(s) failed:";
  for (const auto& f : failures) msg += "\n  " + f.sample_id + ": " + f.message;
  return msg;
}

/// Manifest to features.csv plus one cross-validation report per requested side.
/// Any failed row aborts the run (data error) unless `skip_bad` is set.
inline PipelineResult run_pipeline(const Manifest& manifest, const PipelineConfig& cfg, FeatureSet set,
                                   const std::filesystem::path& out_dir, const std::vector<eval::SideFilter>& sides,
                                   bool skip_bad = false) {
  FeatureExtractor extractor(cfg, out_dir / "cache");
  RunStats stats;
  auto ext = extract_features(manifest, extractor, set, stats);
  PipelineResult res;
  res.failures = std::move(ext.failures);
  res.stages = stats.snapshot();
  if (!res.failures.empty() && !skip_bad) fail(ErrorKind::data, describe_failures(res.failures));
  const std::string hash = config_hash(cfg);
  save_feature_csv(out_dir / "features.csv", ext.data, hash);
  for (const auto side : sides) {
    const eval::Dataset subset = eval::side_split(ext.data, side);
    auto rep = eval::cross_validate(subset, cv_config(cfg));
    const std::string s = eval::to_string(side);
    io::write_text_atomic(out_dir / ("report_" + s + ".json"), report_json(rep, set.name(), side, hash).dump(2) + "\n");
    io::write_text_atomic(out_dir / ("roc_" + s + ".csv"), roc_csv(rep, hash));
    res.reports.emplace(s, std::move(rep));
  }
  res.data = std::move(ext.data);
  return res;
}

/// Mean +- std of accuracy and AUC for every (side, feature set) cell.
struct ComparisonGrid {
  struct Cell {
    eval::Summary accuracy;
    eval::Summary auc;
  };
  std::vector<std::string> sides;
  std::vector<std::string> sets;
  std::map<std::string, std::map<std::string, Cell>> cells;  ///< [side][set]

  const Cell& at(const std::string& side, const std::string& set) const { return cells.at(side).at(set); }
};

inline ComparisonGrid compare_grid(const eval::Dataset& all_features, const PipelineConfig& cfg) {
  ComparisonGrid grid;
  for (auto side : {eval::SideFilter::left, eval::SideFilter::right, eval::SideFilter::both})
    grid.sides.push_back(eval::to_string(side));
  for (const auto& set : comparison_sets()) grid.sets.push_back(set.name());
  for (auto side : {eval::SideFilter::left, eval::SideFilter::right, eval::SideFilter::both}) {
    const eval::Dataset subset = eval::side_split(all_features, side);
    for (const auto& set : comparison_sets()) {
      const auto rep = eval::cross_validate(select_features(subset, set), cv_config(cfg));
      grid.cells[eval::to_string(side)][set.name()] = {rep.accuracy, rep.auc};
    }
  }
  return grid;
}

inline nlohmann::json to_json(const ComparisonGrid& g, const PipelineConfig& cfg) {
  nlohmann::json rows = nlohmann::json::array();
  for (const char* metric : {"accuracy", "auc"})
    for (const auto& side : g.sides) {
      nlohmann::json cells = nlohmann::json::object();
      for (const auto& set : g.sets) {
        const auto& s = std::string(metric) == "accuracy" ? g.at(side, set).accuracy : g.at(side, set).auc;
        cells[set] = {{"mean", s.mean}, {"std", s.std}, {"std_e2", s.std * 100.0}};
      }
      rows.push_back({{"metric", metric}, {"side", side}, {"cells", std::move(cells)}});
    }
  return {{"tool", kToolName},
          {"tool_version", kToolVersion},
          {"config_hash", config_hash(cfg)},
          {"k", cfg.k},
          {"repeats", cfg.repeats},
          {"seed", cfg.seed},
          {"columns", g.sets},
          {"rows", std::move(rows)}};
}

/// Cells read "mean±std*1e2".
inline std::string to_csv(const ComparisonGrid& g, const PipelineConfig& cfg) {
  std::string out = provenance_line(config_hash(cfg)) + "\nmetric,side";
  for (const auto& set : g.sets) out += "," + set;
  out += "\n";
  char buf[64];
  for (const char* metric : {"accuracy", "auc"})
    for (const auto& side : g.sides) {
      out += std::string(metric) + "," + side;
      for (const auto& set : g.sets) {
        const auto& s = std::string(metric) == "accuracy" ? g.at(side, set).accuracy : g.at(side, set).auc;
        std::snprintf(buf, sizeof buf, ",%.4f\xC2\xB1%.2f", s.mean, s.std * 100.0);
        out += buf;
      }
      out += "\n";
    }
  return out;
}

inline void write_comparison(const ComparisonGrid& g, const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
  io::write_text_atomic(out_dir / "comparison.json", to_json(g, cfg).dump(2) + "\n");
  io::write_text_atomic(out_dir / "comparison.csv", to_csv(g, cfg));
}

struct CompareResult {
  ComparisonGrid grid;
  std::map<std::string, StageStats> stages;
  std::vector<RowFailure> failures;
};

/// Extracts all families once (cached), then cross-validates every feature set on every side.
inline CompareResult compare_feature_sets(const Manifest& manifest, const PipelineConfig& cfg,
                                          const std::filesystem::path& out_dir, bool skip_bad = false) {
  FeatureExtractor extractor(cfg, out_dir / "cache");
  RunStats stats;
  auto ext = extract_features(manifest, extractor, FeatureSet(7u), stats);
  if (!ext.failures.empty() && !skip_bad) fail(ErrorKind::data, describe_failures(ext.failures));
  save_feature_csv(out_dir / "features.csv", ext.data, config_hash(cfg));
  CompareResult res{compare_grid(ext.data, cfg), stats.snapshot(), std::move(ext.failures)};
  write_comparison(res.grid, cfg, out_dir);
  return res;
}

}  // namespace renoscan
