#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "renoscan/error.hpp"

namespace renoscan::svm {

/// Dense row-major matrix, one sample per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw std::invalid_argument("FeatureMatrix: data length does not match rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  std::span<const double> data() const noexcept { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct TrainingSet {
  FeatureMatrix features;
  std::vector<int> labels;  ///< -1 or +1 per row
};

enum class Scaling { none, minmax, standard };

inline std::string to_string(Scaling s) {
  switch (s) {
    case Scaling::none: return "none";
    case Scaling::minmax: return "minmax";
    case Scaling::standard: return "standard";
  }
  return "none";
}

inline Scaling scaling_from_string(const std::string& s) {
  if (s == "none") return Scaling::none;
  if (s == "minmax") return Scaling::minmax;
  if (s == "standard") return Scaling::standard;
  fail(ErrorKind::validation, "unknown scaling '" + s + "' (expected none, minmax or standard)");
}

/// Per-feature affine map v -> (v - offset) * factor, fitted on training rows only.
/// Constant features get factor 0.
struct Scaler {
  Scaling kind = Scaling::none;
  std::vector<double> offset;
  std::vector<double> factor;

  static Scaler fit(const FeatureMatrix& x, Scaling kind) {
    Scaler s;
    s.kind = kind;
    if (kind == Scaling::none) return s;
    const std::size_t d = x.cols(), n = x.rows();
    s.offset.assign(d, 0.0);
    s.factor.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      if (kind == Scaling::minmax) {
        double lo = x(0, j), hi = x(0, j);
        for (std::size_t i = 1; i < n; ++i) {
          lo = std::min(lo, x(i, j));
          hi = std::max(hi, x(i, j));
        }
        s.offset[j] = lo;
        s.factor[j] = hi > lo ? 1.0 / (hi - lo) : 0.0;
      } else {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
        var /= static_cast<double>(n);
        s.offset[j] = mean;
        s.factor[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
      }
    }
    return s;
  }

  std::size_t dims() const noexcept { return offset.size(); }

  void apply(std::span<const double> in, std::span<double> out) const {
    if (kind == Scaling::none) {
      std::copy(in.begin(), in.end(), out.begin());
      return;
    }
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - offset[j]) * factor[j];
  }
};

struct TrainConfig {
  double c = 1.0;
  double eps = 0.1;
  int max_iter = 1000;
  Scaling scaling = Scaling::minmax;
  bool bias = false;  ///< append a constant-1 feature after scaling
  std::uint64_t seed = 0;
};

struct SvmModel {
  std::vector<double> w;  ///< includes the trailing bias weight when `bias` is set
  double c = 1.0;
  bool bias = false;
  Scaler scaler;
  std::vector<std::string> feature_schema;

  std::size_t input_dims() const noexcept { return w.size() - (bias ? 1 : 0); }

  /// The vector w is dotted with: scaled features, plus 1 when `bias` is set.
  std::vector<double> transform(std::span<const double> f) const {
    if (f.size() != input_dims())
      throw std::invalid_argument("SvmModel: feature length " + std::to_string(f.size()) + " != model dimension " +
                                  std::to_string(input_dims()));
    std::vector<double> out(w.size(), 1.0);
    scaler.apply(f, std::span(out).first(f.size()));
    return out;
  }
};

struct TrainResult {
  SvmModel model;
  std::vector<double> alpha;
  int epochs = 0;
  bool converged = false;
  /// Dual objective after every epoch.
  std::vector<double> dual_objective;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// 0.5 * w'w + C * sum_i max(0, 1 - y_i w'x_i) over already-transformed rows.
inline double primal_objective(std::span<const double> w, const FeatureMatrix& x, std::span<const int> y, double c) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) loss += std::max(0.0, 1.0 - y[i] * dot(w, x.row(i)));
  return 0.5 * dot(w, w) + c * loss;
}

/// Applies the model's scaler and bias column to every row.
inline FeatureMatrix transform_rows(const SvmModel& model, const FeatureMatrix& x) {
  FeatureMatrix out(x.rows(), model.w.size(), 1.0);
  for (std::size_t i = 0; i < x.rows(); ++i) model.scaler.apply(x.row(i), out.row(i).first(x.cols()));
  return out;
}

inline void check_training_set(const TrainingSet& data) {
  if (data.features.rows() != data.labels.size())
    throw std::invalid_argument("train: feature row count does not match label count");
  if (data.features.rows() == 0 || data.features.cols() == 0) fail(ErrorKind::data, "train: empty training set");
  bool pos = false, neg = false;
  for (int y : data.labels) {
    if (y == 1) pos = true;
    else if (y == -1) neg = true;
    else fail(ErrorKind::data, "train: labels must be -1 or +1");
  }
  if (!pos || !neg) fail(ErrorKind::data, "train: training data contains a single class");
  for (double v : data.features.data())
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "train: non-finite feature value");
}

/// Dual coordinate descent for the L2-regularized hinge-loss SVM without shrinking.
/// Each epoch visits all rows in a seeded random order; training stops when the
/// largest projected-gradient magnitude of an epoch drops below eps.
inline TrainResult train(const TrainingSet& data, const TrainConfig& cfg) {
  if (!(cfg.c > 0.0)) throw std::invalid_argument("train: C must be positive");
  if (!(cfg.eps > 0.0) || cfg.max_iter < 1) throw std::invalid_argument("train: eps and max_iter must be positive");
  check_training_set(data);

  TrainResult res;
  SvmModel& model = res.model;
  model.c = cfg.c;
  model.bias = cfg.bias;
  model.scaler = Scaler::fit(data.features, cfg.scaling);
  model.w.assign(data.features.cols() + (cfg.bias ? 1 : 0), 0.0);
  const FeatureMatrix x = transform_rows(model, data.features);
  const std::size_t n = x.rows();
  const auto& y = data.labels;

  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) qii[i] = dot(x.row(i), x.row(i));

  auto& alpha = res.alpha;
  alpha.assign(n, 0.0);
  auto& w = model.w;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  const double c = cfg.c;

  for (int epoch = 0; epoch < cfg.max_iter; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_violation = 0.0;
    for (std::size_t i : order) {
      if (qii[i] == 0.0) continue;
      const auto xi = x.row(i);
      const double g = y[i] * dot(w, xi) - 1.0;
      double pg = g;
      if (alpha[i] == 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] == c) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg == 0.0) continue;
      const double old = alpha[i];
      alpha[i] = std::min(std::max(old - g / qii[i], 0.0), c);
      const double delta = (alpha[i] - old) * y[i];
      for (std::size_t j = 0; j < w.size(); ++j) w[j] += delta * xi[j];
    }
    res.epochs = epoch + 1;
    res.dual_objective.push_back(std::accumulate(alpha.begin(), alpha.end(), 0.0) - 0.5 * dot(w, w));
    if (max_violation < cfg.eps) {
      res.converged = true;
      break;
    }
  }
  for (double v : w)
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "train: non-finite weight");
  return res;
}

/// w'f after the model's scaling.
inline double decision_value(const SvmModel& model, std::span<const double> f) {
  return dot(model.w, model.transform(f));
}

/// sgn with ties going to +1.
inline int label_of(double decision) { return decision >= 0.0 ? 1 : -1; }

inline nlohmann::json to_json(const SvmModel& m) {
  return {{"schema_version", 1},
          {"feature_schema", m.feature_schema},
          {"c", m.c},
          {"bias", m.bias},
          {"scaler", {{"kind", to_string(m.scaler.kind)}, {"offset", m.scaler.offset}, {"factor", m.scaler.factor}}},
          {"w", m.w}};
}

inline SvmModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != 1) fail(ErrorKind::validation, "model: unsupported schema_version");
    SvmModel m;
    m.feature_schema = j.at("feature_schema").get<std::vector<std::string>>();
    m.c = j.at("c").get<double>();
    m.bias = j.at("bias").get<bool>();
    m.scaler.kind = scaling_from_string(j.at("scaler").at("kind").get<std::string>());
    m.scaler.offset = j.at("scaler").at("offset").get<std::vector<double>>();
    m.scaler.factor = j.at("scaler").at("factor").get<std::vector<double>>();
    m.w = j.at("w").get<std::vector<double>>();
    if (m.w.size() < (m.bias ? 1u : 0u)) fail(ErrorKind::validation, "model: weight vector too short");
    if (m.scaler.kind != Scaling::none &&
        (m.scaler.offset.size() != m.input_dims() || m.scaler.factor.size() != m.input_dims()))
      fail(ErrorKind::validation, "model: scaler dimensions do not match w");
    if (!m.feature_schema.empty() && m.feature_schema.size() != m.input_dims())
      fail(ErrorKind::validation, "model: feature_schema length does not match w");
    for (double v : m.w)
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "model: non-finite weight");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation, std::string("model: ") + e.what());
  }
}

}  // namespace renoscan::svm
