// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <renoscan/renoscan.hpp>

#include <Eigen/Dense>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

namespace {

using namespace renoscan;
namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;
};

void check(Outcome& o, bool ok, const std::string& what) {
  if (!ok && o.pass) {
    o.pass = false;
    o.detail = what;
  }
}

// ---- 1: distance transform

Outcome distance_transform_oracle() {
  Outcome o;
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> dens(0.0005, 0.05);
  for (int trial = 0; trial < 100 && o.pass; ++trial) {
    std::bernoulli_distribution coin(trial == 0 ? 0.0 : dens(rng));
    std::vector<Pixel> px;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (coin(rng)) px.push_back({x, y});
    if (trial == 1) px = {{0, 0}};
    const EdgeMap e(64, 64, px);
    const GrayImage got = squared_distance_transform(e);
    for (int y = 0; y < 64 && o.pass; ++y)
      for (int x = 0; x < 64; ++x) {
        long best = px.empty() ? 0 : std::numeric_limits<long>::max();
        for (const auto& p : px) best = std::min(best, long(x - p.x) * (x - p.x) + long(y - p.y) * (y - p.y));
        if (got(x, y) != static_cast<double>(best)) {
          check(o, false, "trial " + std::to_string(trial) + " pixel (" + std::to_string(x) + "," + std::to_string(y) + ")");
          break;
        }
      }
  }
  if (o.pass) o.detail = "100 maps exact";
  return o;
}

// ---- 2: SVM

struct Reference {
  std::vector<double> w;
  double primal = 0.0;
  double dual = 0.0;
};

// accelerated projected gradient on the box-constrained dual
Reference dual_reference(const svm::TrainingSet& t, double c, int iters) {
  const std::size_t l = t.features.rows(), d = t.features.cols();
  std::vector<std::vector<double>> q(l, std::vector<double>(l));
  double lip = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) q[i][j] = t.labels[i] * t.labels[j] * svm::dot(t.features.row(i), t.features.row(j));
    lip += q[i][i];
  }
  std::vector<double> a(l, 0.0), prev = a, z = a;
  double tk = 1.0;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < l; ++i) {
      double g = -1.0;
      for (std::size_t j = 0; j < l; ++j) g += q[i][j] * z[j];
      a[i] = std::clamp(z[i] - g / lip, 0.0, c);
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    for (std::size_t i = 0; i < l; ++i) z[i] = a[i] + ((tk - 1.0) / tn) * (a[i] - prev[i]);
    prev = a;
    tk = tn;
  }
  Reference r;
  r.w.assign(d, 0.0);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < d; ++j) r.w[j] += a[i] * t.labels[i] * t.features(i, j);
  r.primal = svm::primal_objective(r.w, t.features, t.labels, c);
  double sa = 0.0;
  for (double v : a) sa += v;
  r.dual = sa - 0.5 * svm::dot(r.w, r.w);
  return r;
}

Outcome svm_oracle() {
  Outcome o;
  std::mt19937_64 rng(2002);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> lsize(6, 50), dsize(1, 3);
  std::uniform_real_distribution<double> shift(0.0, 2.0), logc(-2.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t l = static_cast<std::size_t>(lsize(rng)), d = static_cast<std::size_t>(dsize(rng));
    const double sep = shift(rng), c = std::pow(10.0, logc(rng));
    svm::TrainingSet t{svm::FeatureMatrix(l, d), std::vector<int>(l)};
    for (std::size_t i = 0; i < l; ++i) {
      t.labels[i] = i % 2 == 0 ? 1 : -1;
      for (std::size_t j = 0; j < d; ++j) t.features(i, j) = n(rng) + (j == 0 ? t.labels[i] * sep : 0.0);
    }
    svm::TrainConfig tc;
    tc.c = c;
    tc.eps = 1e-7;
    tc.max_iter = 200000;
    tc.scaling = svm::Scaling::none;
    tc.seed = static_cast<std::uint64_t>(trial);
    const auto r = svm::train(t, tc);
    const Reference ref = dual_reference(t, c, 20000);
    const double p = svm::primal_objective(r.model.w, t.features, t.labels, c);
    const double rel = std::abs(p - ref.primal) / ref.primal;
    worst = std::max(worst, rel);
    const std::string tag = "trial " + std::to_string(trial);
    check(o, rel <= 1e-3, tag + ": primal " + std::to_string(p) + " vs reference " + std::to_string(ref.primal));
    check(o, p >= ref.dual - 1e-9, tag + ": primal below the dual lower bound");
    std::vector<double> w(d, 0.0);
    for (std::size_t i = 0; i < l; ++i) {
      check(o, r.alpha[i] >= 0.0 && r.alpha[i] <= c, tag + ": alpha outside [0, C]");
      for (std::size_t j = 0; j < d; ++j) w[j] += r.alpha[i] * t.labels[i] * t.features(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) check(o, std::abs(w[j] - r.model.w[j]) <= 1e-6, tag + ": w != sum alpha y f");
  }
  if (o.pass) {
    std::ostringstream s;
    s << "25 problems, worst relative gap " << worst;
    o.detail = s.str();
  }
  return o;
}

// ---- 3: convolution / forward pass

using Planes = std::vector<double>;  // HWC, double precision

Planes naive_layer(const cnn::LayerOp& op, const cnn::LayerWeights* lw, const Planes& in, cnn::Shape is, cnn::Shape& os) {
  Planes out;
  if (const auto* p = std::get_if<cnn::Convolution>(&op)) {
    os = {(is.height + 2 * p->pad - p->kernel_h) / p->stride + 1, (is.width + 2 * p->pad - p->kernel_w) / p->stride + 1,
          p->out_channels};
    const int cin = p->in_channels / p->groups, cout = p->out_channels / p->groups;
    out.assign(os.count(), 0.0);
    for (int h = 0; h < os.height; ++h)
      for (int w = 0; w < os.width; ++w)
        for (int oc = 0; oc < p->out_channels; ++oc) {
          double s = lw->bias[oc];
          for (int i = 0; i < p->kernel_h; ++i)
            for (int j = 0; j < p->kernel_w; ++j)
              for (int c = 0; c < cin; ++c) {
                const int y = h * p->stride - p->pad + i, x = w * p->stride - p->pad + j;
                if (y < 0 || x < 0 || y >= is.height || x >= is.width) continue;
                const int ch = (oc / cout) * cin + c;
                s += in[(static_cast<std::size_t>(y) * is.width + x) * is.channels + ch] *
                     lw->kernel[((i * p->kernel_w + j) * cin + c) * p->out_channels + oc];
              }
          out[(static_cast<std::size_t>(h) * os.width + w) * os.channels + oc] = s;
        }
  } else if (std::holds_alternative<cnn::Relu>(op)) {
    os = is;
    out = in;
    for (auto& v : out) v = std::max(0.0, v);
  } else if (const auto* p = std::get_if<cnn::MaxPool>(&op)) {
    os = {(is.height - p->window) / p->stride + 1, (is.width - p->window) / p->stride + 1, is.channels};
    out.assign(os.count(), -std::numeric_limits<double>::infinity());
    for (int h = 0; h < os.height; ++h)
      for (int w = 0; w < os.width; ++w)
        for (int c = 0; c < os.channels; ++c)
          for (int i = 0; i < p->window; ++i)
            for (int j = 0; j < p->window; ++j) {
              auto& dst = out[(static_cast<std::size_t>(h) * os.width + w) * os.channels + c];
              dst = std::max(dst, in[(static_cast<std::size_t>(h * p->stride + i) * is.width + (w * p->stride + j)) * is.channels + c]);
            }
  } else if (const auto* p = std::get_if<cnn::FullyConnected>(&op)) {
    os = {1, 1, p->out};
    out.assign(static_cast<std::size_t>(p->out), 0.0);
    for (int oc = 0; oc < p->out; ++oc) {
      double s = lw->bias[oc];
      for (std::size_t i = 0; i < in.size(); ++i) s += lw->kernel[oc * in.size() + i] * in[i];
      out[oc] = s;
    }
  }
  return out;
}

cnn::NetworkSpec random_net(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 1 << 20);
  auto pick = [&](int lo, int hi) { return lo + u(rng) % (hi - lo + 1); };
  cnn::NetworkSpec s;
  s.input = {pick(6, 20), pick(6, 20), pick(1, 4)};
  cnn::Shape cur = s.input;
  const int layers = pick(1, 3);
  for (int i = 0; i < layers; ++i) {
    const std::string name = "l" + std::to_string(i + 1);
    const int kind = i == 0 ? 0 : pick(0, 3);
    if (kind == 0) {
      cnn::Convolution c;
      c.kernel_h = pick(1, std::min(5, cur.height));
      c.kernel_w = pick(1, std::min(5, cur.width));
      c.groups = cur.channels % 2 == 0 && pick(0, 1) ? 2 : 1;
      c.in_channels = cur.channels;
      c.out_channels = c.groups * pick(1, 4);
      c.stride = pick(1, 2);
      c.pad = pick(0, 2);
      s.layers.push_back({name, c});
    } else if (kind == 1) {
      s.layers.push_back({name, cnn::Relu{}});
    } else if (kind == 2 && cur.height >= 2 && cur.width >= 2) {
      s.layers.push_back({name, cnn::MaxPool{2, pick(1, 2)}});
    } else {
      s.layers.push_back({name, cnn::FullyConnected{static_cast<int>(cur.count()), pick(1, 10)}});
    }
    cur = cnn::infer_shapes(s).back();
    if (cur.height == 1 && cur.width == 1 && i + 1 < layers) break;
  }
  return s;
}

Outcome convolution_oracle() {
  Outcome o;
  const cnn::NetworkSpec alex = cnn::alexnet_spec();
  const auto shapes = cnn::infer_shapes(alex);
  const std::map<std::string, cnn::Shape> canonical{{"conv1", {55, 55, 96}},  {"pool1", {27, 27, 96}},
                                                    {"conv2", {27, 27, 256}}, {"pool2", {13, 13, 256}},
                                                    {"conv3", {13, 13, 384}}, {"conv4", {13, 13, 384}},
                                                    {"conv5", {13, 13, 256}}, {"pool5", {6, 6, 256}},
                                                    {"fc6", {1, 1, 4096}},    {"fc7", {1, 1, 4096}},
                                                    {"fc8", {1, 1, 1000}}};
  for (std::size_t i = 0; i < alex.layers.size(); ++i) {
    const auto it = canonical.find(alex.layers[i].name);
    if (it != canonical.end())
      check(o, shapes[i] == it->second, alex.layers[i].name + " shape " + cnn::to_string(shapes[i]));
  }
  check(o, alex.input == (cnn::Shape{227, 227, 3}), "AlexNet input shape");

  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<float> uf(-1.0f, 1.0f);
  double worst = 0.0;
  for (int trial = 0; trial < 40 && o.pass; ++trial) {
    const cnn::NetworkSpec s = random_net(rng);
    const cnn::WeightArchive w = cnn::random_weights(s, static_cast<std::uint64_t>(trial));
    cnn::Tensor in(s.input);
    for (auto& v : in.data()) v = uf(rng);
    cnn::ForwardOptions opts;
    opts.tap = s.layers.back().name;
    const cnn::Tensor got = cnn::forward_tensor(s, w, in, opts);
    Planes cur(in.data().begin(), in.data().end());
    cnn::Shape sh = s.input;
    for (const auto& layer : s.layers) {
      const auto it = w.layers.find(layer.name);
      cnn::Shape next;
      cur = naive_layer(layer.op, it == w.layers.end() ? nullptr : &it->second, cur, sh, next);
      sh = next;
    }
    check(o, got.shape() == sh && got.data().size() == cur.size(), "trial " + std::to_string(trial) + " output shape");
    if (!o.pass) break;
    for (std::size_t i = 0; i < cur.size(); ++i) worst = std::max(worst, std::abs(got.data()[i] - cur[i]));
    check(o, worst <= 1e-4, "trial " + std::to_string(trial) + " max abs error " + std::to_string(worst));
  }
  if (o.pass) {
    std::ostringstream s;
    s << "40 nets, max abs error " << worst << "; AlexNet shapes canonical";
    o.detail = s.str();
  }
  return o;
}

// ---- 4: ellipse fit

EllipseFit moment_oracle(const BinaryMask& mask) {
  std::vector<Eigen::Vector2d> pts;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.inside(x, y)) pts.emplace_back(x, y);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const Eigen::Vector2d major = es.eigenvectors().col(1);
  return {mean.x(), mean.y(), 4.0 * std::sqrt(es.eigenvalues()(1)), 4.0 * std::sqrt(es.eigenvalues()(0)),
          std::atan2(-major.y(), major.x())};
}

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, kPi);
  if (d > kPi / 2) d -= kPi;
  if (d < -kPi / 2) d += kPi;
  return std::abs(d);
}

Outcome ellipse_fit() {
  Outcome o;
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> ua(20.0, 60.0), u01(0.0, 1.0), off(-3.0, 3.0);
  double worst_oracle = 0.0, worst_gen = 0.0, worst_axis = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double a = ua(rng), b = 10.0 + u01(rng) * (a - 10.0);
    const double theta = kPi / 2 - u01(rng) * kPi;  // (-pi/2, pi/2]
    const int size = 2 * static_cast<int>(a) + 16;
    const BinaryMask m = rasterize_ellipse(size, size, size / 2.0 + off(rng), size / 2.0 + off(rng), a, b, theta);
    const EllipseFit f = fit_ellipse(m), ref = moment_oracle(m);
    const std::string tag = "trial " + std::to_string(trial);
    const double d_oracle = angle_diff(f.theta, ref.theta);
    worst_oracle = std::max(worst_oracle, d_oracle);
    check(o, f.theta > -kPi / 2 && f.theta <= kPi / 2, tag + ": theta outside (-pi/2, pi/2]");
    check(o, d_oracle <= 0.02, tag + ": theta off the moment oracle by " + std::to_string(d_oracle));
    if (b <= 0.85 * a) {
      const double d_gen = angle_diff(f.theta, theta);
      worst_gen = std::max(worst_gen, d_gen);
      check(o, d_gen <= 0.02, tag + ": theta off the generating angle by " + std::to_string(d_gen));
    }
    const double e1 = std::abs(f.major - ref.major) / ref.major, e2 = std::abs(f.minor - ref.minor) / ref.minor;
    worst_axis = std::max({worst_axis, e1, e2});
    check(o, e1 <= 0.03 && e2 <= 0.03, tag + ": axes off by " + std::to_string(std::max(e1, e2)));
  }
  if (o.pass) {
    std::ostringstream s;
    s << "50 ellipses, theta err " << worst_oracle << " (oracle) " << worst_gen << " (generator), axis err " << worst_axis;
    o.detail = s.str();
  }
  return o;
}

// ---- 5: AUC

Outcome auc_oracle() {
  Outcome o;
  std::mt19937_64 rng(5005);
  std::uniform_int_distribution<int> size(2, 80), levels(1, 12);
  for (int trial = 0; trial < 1000 && o.pass; ++trial) {
    const int n = size(rng), q = levels(rng);
    std::uniform_int_distribution<int> score(0, q);
    std::bernoulli_distribution pos(0.5);
    std::vector<eval::Scored> s;
    for (int i = 0; i < n; ++i) s.push_back({score(rng) * 0.25 - 1.0, pos(rng) ? 1 : -1});
    s[0].label = 1;
    s[1].label = -1;
    long twice = 0, pairs = 0;
    for (const auto& p : s)
      for (const auto& m : s)
        if (p.label > 0 && m.label < 0) {
          ++pairs;
          twice += p.score > m.score ? 2 : (p.score == m.score ? 1 : 0);
        }
    const double expect = static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
    const double got = eval::auc(s);
    check(o, got == expect, "trial " + std::to_string(trial) + ": " + std::to_string(got) + " != " + std::to_string(expect));
  }
  if (o.pass) o.detail = "1000 tied sets exact";
  return o;
}

// ---- 6-8: phantom experiment

struct Experiment {
  std::string comparison_json;
  ComparisonGrid grid;
  double seconds = 0.0;
};

PipelineConfig experiment_config() {
  PipelineConfig cfg;
  cfg.k = 10;
  cfg.repeats = 10;
  cfg.seed = 7;
  cfg.threads = 1;
  return cfg;
}

Experiment run_experiment(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  PhantomConfig pc;
  pc.count = 100;
  pc.seed = 7;
  const Manifest m = write_phantom_corpus(dir / "corpus", pc);
  const auto res = compare_feature_sets(m, experiment_config(), dir / "out");
  const auto bytes = io::read_bytes(dir / "out" / "comparison.json");
  Experiment e{std::string(bytes.begin(), bytes.end()), res.grid, 0.0};
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

Outcome phantom_experiment(const Experiment& e) {
  Outcome o;
  check(o, e.seconds < 300.0, "took " + std::to_string(e.seconds) + " s");
  double lo = 1.0;
  for (const auto& side : e.grid.sides)
    for (const auto& set : e.grid.sets) {
      if (set.find("GEOME") == std::string::npos) continue;
      const double a = e.grid.at(side, set).auc.mean;
      lo = std::min(lo, a);
      check(o, a >= 0.95, set + "/" + side + " AUC " + std::to_string(a));
    }
  double full_lo = 1.0;
  for (const auto& side : e.grid.sides) {
    const double a = e.grid.at(side, "CNN+HOG+GEOME").auc.mean;
    full_lo = std::min(full_lo, a);
    check(o, a >= 0.9 && a <= 1.0, "CNN+HOG+GEOME/" + side + " AUC " + std::to_string(a));
  }
  if (o.pass) {
    std::ostringstream s;
    s << "min GEOME-set AUC " << lo << ", min CNN+HOG+GEOME AUC " << full_lo;
    o.detail = s.str();
  }
  return o;
}

Outcome protocol_fidelity(const Experiment& e) {
  Outcome o;
  const std::vector<std::string> sets{"CNN", "HOG", "GEOME", "HOG+GEOME", "CNN+GEOME", "CNN+HOG", "CNN+HOG+GEOME"};
  check(o, e.grid.sets == sets, "feature set columns");
  check(o, e.grid.sides == (std::vector<std::string>{"left", "right", "both"}), "side rows");
  const auto j = nlohmann::json::parse(e.comparison_json);
  check(o, j["rows"].size() == 6, "expected 6 metric x side rows");
  for (const auto& row : j["rows"]) {
    check(o, row["cells"].size() == 7, "expected 7 cells per row");
    for (const auto& [name, cell] : row["cells"].items())
      check(o, cell.contains("mean") && cell.contains("std"), name + " lacks mean/std");
  }
  check(o, j["repeats"] == 10 && j["k"] == 10, "k/repeats not recorded");

  // leakage canary: label copied into a feature is perfect; hidden from training it is chance
  std::mt19937_64 rng(7007);
  std::normal_distribution<double> n(0.0, 1.0);
  eval::Dataset d;
  d.feature_names = {"label", "noise0", "noise1"};
  for (int i = 0; i < 100; ++i) {
    eval::Sample s;
    s.label = i % 2 == 0 ? 1 : -1;
    s.sample_id = "s" + std::to_string(i);
    s.subject_id = "p" + std::to_string(i);
    s.features = {static_cast<double>(s.label), n(rng), n(rng)};
    d.samples.push_back(std::move(s));
  }
  eval::CvConfig cv;
  cv.k = 10;
  cv.repeats = 10;
  cv.seed = 7;
  const double honest = eval::cross_validate(d, cv).auc.mean;
  check(o, honest == 1.0, "label feature AUC " + std::to_string(honest));
  eval::FoldHook hide = [](eval::FoldData& fd) {
    std::mt19937_64 local(static_cast<std::uint64_t>(fd.repeat * 100 + fd.fold));
    std::uniform_int_distribution<int> coin(0, 1);
    for (std::size_t i = 0; i < fd.train.features.rows(); ++i) fd.train.features(i, 0) = coin(local) ? 1.0 : -1.0;
  };
  const double hidden = eval::cross_validate(d, cv, hide).auc.mean;
  check(o, hidden >= 0.35 && hidden <= 0.65, "canary with training rows scrambled reached AUC " + std::to_string(hidden));
  if (o.pass) {
    std::ostringstream s;
    s << "grid 2x3x7 with mean/std; canary AUC " << honest << " open, " << hidden << " hidden";
    o.detail = s.str();
  }
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s criterion %d %-22s %8.2f s  %s\n", o.pass ? "PASS" : "FAIL", id, name, s, o.detail.c_str());
    std::fflush(stdout);
  };
  auto timed = [](double limit, const std::function<Outcome()>& fn) {
    return [limit, fn] {
      const auto t0 = std::chrono::steady_clock::now();
      Outcome o = fn();
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      check(o, s < limit, "exceeded " + std::to_string(limit) + " s");
      return o;
    };
  };
  report(1, "distance-transform", timed(5.0, distance_transform_oracle));
  report(2, "svm-oracle", timed(10.0, svm_oracle));
  report(3, "convolution-oracle", timed(10.0, convolution_oracle));
  report(4, "ellipse-fit", timed(5.0, ellipse_fit));
  report(5, "auc-oracle", timed(5.0, auc_oracle));

  const fs::path root = fs::temp_directory_path() / ("renoscan_accept_" + std::to_string(::getpid()));
  std::optional<Experiment> first;
  report(6, "phantom-experiment", [&] {
    first = run_experiment(root / "run1");
    return phantom_experiment(*first);
  });
  report(7, "protocol-fidelity", [&] {
    if (!first) return Outcome{false, "criterion 6 did not produce a grid"};
    return protocol_fidelity(*first);
  });
  report(8, "determinism", [&] {
    if (!first) return Outcome{false, "criterion 6 did not produce a grid"};
    const Experiment second = run_experiment(root / "run2");
    Outcome o;
    check(o, second.comparison_json == first->comparison_json, "comparison.json differs between runs");
    if (o.pass) o.detail = "comparison.json byte-identical (" + std::to_string(first->comparison_json.size()) + " bytes)";
    return o;
  });
  fs::remove_all(root);
  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
