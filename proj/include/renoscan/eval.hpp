#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "renoscan/error.hpp"
#include "renoscan/parallel.hpp"
#include "renoscan/seed.hpp"
#include "renoscan/svm.hpp"

namespace renoscan::eval {

enum class Side { left, right };
enum class SideFilter { left, right, both };

inline std::string to_string(Side s) { return s == Side::left ? "left" : "right"; }
inline std::string to_string(SideFilter s) {
  switch (s) {
    case SideFilter::left: return "left";
    case SideFilter::right: return "right";
    case SideFilter::both: return "both";
  }
  return "both";
}

inline Side side_from_string(const std::string& s) {
  if (s == "left" || s == "L" || s == "l") return Side::left;
  if (s == "right" || s == "R" || s == "r") return Side::right;
  fail(ErrorKind::validation, "unknown side '" + s + "' (expected left or right)");
}

inline SideFilter side_filter_from_string(const std::string& s) {
  if (s == "both") return SideFilter::both;
  return side_from_string(s) == Side::left ? SideFilter::left : SideFilter::right;
}

struct Sample {
  std::string sample_id;
  std::string subject_id;
  Side side = Side::left;
  int label = 1;
  std::vector<double> features;
};

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<Sample> samples;

  std::size_t dims() const noexcept { return feature_names.size(); }
};

/// Throws unless ids are unique, labels are +-1 and feature lengths match the names.
inline void check_dataset(const Dataset& data) {
  std::set<std::string> ids;
  for (const auto& s : data.samples) {
    if (!ids.insert(s.sample_id).second) fail(ErrorKind::validation, "duplicate sample_id " + s.sample_id);
    if (s.label != 1 && s.label != -1) fail(ErrorKind::validation, "sample " + s.sample_id + ": label must be -1 or +1");
    if (s.features.size() != data.feature_names.size())
      fail(ErrorKind::validation, "sample " + s.sample_id + ": feature length does not match the schema");
  }
}

/// Samples on the requested side; `both` keeps everything.
inline Dataset side_split(const Dataset& data, SideFilter side) {
  Dataset out{data.feature_names, {}};
  for (const auto& s : data.samples)
    if (side == SideFilter::both || (side == SideFilter::left) == (s.side == Side::left)) out.samples.push_back(s);
  if (out.samples.empty())
    fail(ErrorKind::data, "no samples for side '" + to_string(side) + "'; check the side column of the input");
  return out;
}

/// Fold index per sample.
using FoldAssignment = std::vector<int>;

/// Label-stratified k-fold split. Each class is shuffled by the seed and dealt
/// round-robin, so per-fold class counts differ by at most one. With
/// `group_by_subject`, whole subjects are dealt instead of images.
inline FoldAssignment stratified_kfold(const Dataset& data, int k, std::uint64_t seed, bool group_by_subject = false) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  const std::size_t n = data.samples.size();

  // Units are images, or subjects when grouping; a unit's label is its first sample's.
  std::vector<std::vector<std::size_t>> units;
  if (group_by_subject) {
    std::map<std::string, std::size_t> unit_of;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = unit_of.emplace(data.samples[i].subject_id, units.size());
      if (fresh) units.emplace_back();
      units[it->second].push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) units.push_back({i});
  }

  std::vector<std::size_t> neg, pos;
  for (std::size_t u = 0; u < units.size(); ++u) (data.samples[units[u].front()].label > 0 ? pos : neg).push_back(u);
  if (neg.size() < static_cast<std::size_t>(k) || pos.size() < static_cast<std::size_t>(k)) {
    fail(ErrorKind::data, "stratified_kfold: each class needs at least k=" + std::to_string(k) + " " +
                              (group_by_subject ? "subjects" : "samples") + " (have " + std::to_string(neg.size()) +
                              " negative, " + std::to_string(pos.size()) + " positive)");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);
  FoldAssignment folds(n, -1);
  std::size_t dealt = 0;
  for (const auto* cls : {&neg, &pos})
    for (std::size_t u : *cls) {
      for (std::size_t i : units[u]) folds[i] = static_cast<int>(dealt % static_cast<std::size_t>(k));
      ++dealt;
    }
  return folds;
}

struct Scored {
  double score = 0.0;
  int label = 1;
};

/// Mann-Whitney AUC: (#concordant + 0.5 * #tied) / (#pos * #neg) over all positive/negative pairs.
inline double auc(std::span<const Scored> decisions) {
  std::vector<Scored> s(decisions.begin(), decisions.end());
  std::sort(s.begin(), s.end(), [](const Scored& a, const Scored& b) { return a.score < b.score; });
  std::uint64_t neg_below = 0, twice_num = 0, npos = 0, nneg = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    for (; j < s.size() && s[j].score == s[i].score; ++j) (s[j].label > 0 ? gp : gn) += 1;
    twice_num += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    npos += gp;
    nneg += gn;
    i = j;
  }
  if (npos == 0 || nneg == 0) fail(ErrorKind::data, "auc: both classes must be present");
  return static_cast<double>(twice_num) / (2.0 * static_cast<double>(npos) * static_cast<double>(nneg));
}

struct RocPoint {
  double threshold = 0.0;  ///< predicted positive when score >= threshold; +inf for the origin
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Threshold sweep from +inf down to the lowest score: starts at (0,0), ends at (1,1).
inline std::vector<RocPoint> roc_curve(std::span<const Scored> decisions) {
  std::vector<Scored> s(decisions.begin(), decisions.end());
  std::sort(s.begin(), s.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  double npos = 0, nneg = 0;
  for (const auto& d : s) (d.label > 0 ? npos : nneg) += 1;
  if (npos == 0 || nneg == 0) fail(ErrorKind::data, "roc_curve: both classes must be present");
  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    for (; j < s.size() && s[j].score == s[i].score; ++j) (s[j].label > 0 ? tp : fp) += 1;
    roc.push_back({s[i].score, fp / nneg, tp / npos});
    i = j;
  }
  return roc;
}

/// Trapezoidal area under a ROC polyline.
inline double roc_area(std::span<const RocPoint> roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) a += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
  return a;
}

inline double accuracy(std::span<const Scored> decisions) {
  std::size_t correct = 0;
  for (const auto& d : decisions) correct += svm::label_of(d.score) == d.label ? 1 : 0;
  return decisions.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(decisions.size());
}

struct CvConfig {
  int k = 10;
  int repeats = 100;
  std::uint64_t seed = 7;
  svm::TrainConfig trainer;
  bool group_by_subject = false;
  int threads = 1;
};

/// One train/test split as handed to the trainer.
struct FoldData {
  int repeat = 0;
  int fold = 0;
  svm::TrainingSet train;
  svm::FeatureMatrix test;
  std::vector<int> test_labels;
};

/// Test hook: sees (and may rewrite) each fold's matrices before fitting.
using FoldHook = std::function<void(FoldData&)>;

struct Summary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation across repeats
  std::vector<double> per_repeat;
};

inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.per_repeat = std::move(values);
  const double n = static_cast<double>(s.per_repeat.size());
  if (n == 0) return s;
  s.mean = std::accumulate(s.per_repeat.begin(), s.per_repeat.end(), 0.0) / n;
  if (n > 1) {
    double ss = 0.0;
    for (double v : s.per_repeat) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1));
  }
  return s;
}

struct CvReport {
  int k = 0;
  int repeats = 0;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::vector<FoldAssignment> folds;  ///< per repeat
  Summary accuracy;
  Summary auc;
  /// ROC of the first repeat's pooled out-of-fold decisions.
  std::vector<RocPoint> roc;
  std::vector<std::vector<Scored>> decisions;  ///< per repeat, in sample order
};

/// Per-repeat fold seed; exposed so tests can reproduce a repeat's split.
inline std::uint64_t repeat_seed(std::uint64_t master, int repeat) {
  return derive_seed(master, "cv-folds", static_cast<std::uint64_t>(repeat));
}

/// Repeated stratified k-fold cross-validation. Scaler and weights of a fold
/// are fitted on its training rows only; accuracy and AUC are computed per
/// repeat from the pooled out-of-fold decision values.
inline CvReport cross_validate(const Dataset& data, const CvConfig& cfg, const FoldHook& hook = {}) {
  check_dataset(data);
  if (cfg.repeats < 1) throw std::invalid_argument("cross_validate: repeats must be >= 1");
  const std::size_t n = data.samples.size(), d = data.dims();
  CvReport rep;
  rep.k = cfg.k;
  rep.repeats = cfg.repeats;
  rep.seed = cfg.seed;
  rep.samples = n;
  for (int r = 0; r < cfg.repeats; ++r)
    rep.folds.push_back(stratified_kfold(data, cfg.k, repeat_seed(cfg.seed, r), cfg.group_by_subject));

  rep.decisions.assign(static_cast<std::size_t>(cfg.repeats), std::vector<Scored>(n));
  const std::size_t tasks = static_cast<std::size_t>(cfg.repeats) * static_cast<std::size_t>(cfg.k);
  parallel_for(tasks, cfg.threads, [&](std::size_t t) {
    const int r = static_cast<int>(t / static_cast<std::size_t>(cfg.k));
    const int f = static_cast<int>(t % static_cast<std::size_t>(cfg.k));
    const auto& folds = rep.folds[static_cast<std::size_t>(r)];
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < n; ++i) (folds[i] == f ? test_idx : train_idx).push_back(i);

    FoldData fd;
    fd.repeat = r;
    fd.fold = f;
    fd.train.features = svm::FeatureMatrix(train_idx.size(), d);
    for (std::size_t a = 0; a < train_idx.size(); ++a) {
      const auto& s = data.samples[train_idx[a]];
      std::copy(s.features.begin(), s.features.end(), fd.train.features.row(a).begin());
      fd.train.labels.push_back(s.label);
    }
    fd.test = svm::FeatureMatrix(test_idx.size(), d);
    for (std::size_t a = 0; a < test_idx.size(); ++a) {
      const auto& s = data.samples[test_idx[a]];
      std::copy(s.features.begin(), s.features.end(), fd.test.row(a).begin());
      fd.test_labels.push_back(s.label);
    }
    if (hook) hook(fd);

    svm::TrainConfig tc = cfg.trainer;
    tc.seed = derive_seed(cfg.seed, "svm", static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(f));
    const auto model = svm::train(fd.train, tc).model;
    auto& out = rep.decisions[static_cast<std::size_t>(r)];
    for (std::size_t a = 0; a < test_idx.size(); ++a)
      out[test_idx[a]] = {svm::decision_value(model, fd.test.row(a)), fd.test_labels[a]};
  });

  std::vector<double> accs, aucs;
  for (const auto& dec : rep.decisions) {
    accs.push_back(accuracy(dec));
    aucs.push_back(auc(dec));
  }
  rep.accuracy = summarize(std::move(accs));
  rep.auc = summarize(std::move(aucs));
  rep.roc = roc_curve(rep.decisions.front());
  return rep;
}

inline nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"std_e2", s.std * 100.0}, {"per_repeat", s.per_repeat}};
}

inline nlohmann::json to_json(const CvReport& r) {
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : r.roc) {
    roc.push_back({{"threshold", std::isfinite(p.threshold) ? nlohmann::json(p.threshold) : nlohmann::json("inf")},
                   {"fpr", p.fpr},
                   {"tpr", p.tpr}});
  }
  return {{"k", r.k},
          {"repeats", r.repeats},
          {"seed", r.seed},
          {"samples", r.samples},
          {"accuracy", summary_json(r.accuracy)},
          {"auc", summary_json(r.auc)},
          {"folds", r.folds},
          {"roc", std::move(roc)}};
}

}  // namespace renoscan::eval
