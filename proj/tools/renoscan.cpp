// renoscan command-line front end.
#include <renoscan/renoscan.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>

namespace {

using namespace renoscan;
namespace fs = std::filesystem;

using Override = std::function<void(PipelineConfig&)>;

/// Options shared by the pipeline-facing subcommands. A --config file is read
/// first; any flag given on the command line then wins over it.
struct ConfigFlags {
  std::string config_path;
  std::vector<Override> overrides;

  template <typename T, typename Apply>
  void add(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    app->add_option_function<T>(
        name, [this, apply](const T& v) { overrides.push_back([apply, v](PipelineConfig& c) { apply(c, v); }); }, help);
  }

  void attach(CLI::App* app, bool cnn, bool learning) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    add<int>(app, "--n0", "normalized frame size", [](PipelineConfig& c, int v) { c.normalize.n0 = v; });
    add<double>(app, "--margin", "fraction of n0 covered by the kidney axes",
                [](PipelineConfig& c, double v) { c.normalize.margin = v; });
    add<std::string>(app, "--axis-scaling", "anisotropic|isotropic", [](PipelineConfig& c, const std::string& v) {
      if (v != "anisotropic" && v != "isotropic") fail(ErrorKind::validation, "--axis-scaling must be anisotropic or isotropic");
      c.normalize.scaling = v == "isotropic" ? AxisScaling::isotropic : AxisScaling::anisotropic;
    });
    add<double>(app, "--canny-sigma", "Gaussian sigma", [](PipelineConfig& c, double v) { c.stack.canny.sigma = v; });
    add<double>(app, "--canny-low", "low threshold fraction", [](PipelineConfig& c, double v) { c.stack.canny.low_frac = v; });
    add<double>(app, "--canny-high", "high threshold fraction",
                [](PipelineConfig& c, double v) { c.stack.canny.high_frac = v; });
    app->add_flag_function(
        "--dt-squared", [this](std::int64_t) { overrides.push_back([](PipelineConfig& c) { c.stack.dt_squared = true; }); },
        "squared distances in the B plane");
    add<std::string>(app, "--hog-channel", "r|g|b", [](PipelineConfig& c, const std::string& v) { c.hog_channel = v; });
    add<int>(app, "--hog-bins", "orientation bins", [](PipelineConfig& c, int v) { c.hog_bins = v; });
    add<double>(app, "--hog-clip", "L2-hysteresis clip", [](PipelineConfig& c, double v) { c.hog_clip = v; });
    if (cnn) {
      add<std::string>(app, "--cnn-spec", "network spec JSON", [](PipelineConfig& c, const std::string& v) { c.cnn.spec_path = v; });
      add<std::string>(app, "--cnn-weights", "weight archive directory",
                       [](PipelineConfig& c, const std::string& v) { c.cnn.weights_path = v; });
      add<std::string>(app, "--tap", "feature layer", [](PipelineConfig& c, const std::string& v) { c.cnn.tap = v; });
      add<std::vector<float>>(app, "--channel-mean", "three per-channel means", [](PipelineConfig& c, const std::vector<float>& v) {
        if (v.size() != 3) fail(ErrorKind::validation, "--channel-mean takes three values");
        c.cnn.channel_mean = {v[0], v[1], v[2]};
      });
      app->add_flag_function(
          "--mean-image", [this](std::int64_t) { overrides.push_back([](PipelineConfig& c) { c.cnn.mean_image = true; }); },
          "subtract the archive's mean image");
    }
    if (learning) {
      add<double>(app, "--c", "SVM C", [](PipelineConfig& c, double v) { c.svm.c = v; });
      add<double>(app, "--eps", "stopping tolerance", [](PipelineConfig& c, double v) { c.svm.eps = v; });
      add<int>(app, "--max-iter", "epoch limit", [](PipelineConfig& c, int v) { c.svm.max_iter = v; });
      add<std::string>(app, "--svm-scaling", "none|minmax|standard",
                       [](PipelineConfig& c, const std::string& v) { c.svm.scaling = svm::scaling_from_string(v); });
      app->add_flag_function(
          "--bias", [this](std::int64_t) { overrides.push_back([](PipelineConfig& c) { c.svm.bias = true; }); },
          "append a constant feature");
      add<int>(app, "--k", "folds", [](PipelineConfig& c, int v) { c.k = v; });
      add<int>(app, "--repeats", "CV repeats", [](PipelineConfig& c, int v) { c.repeats = v; });
      app->add_flag_function(
          "--group-by-subject",
          [this](std::int64_t) { overrides.push_back([](PipelineConfig& c) { c.group_by_subject = true; }); },
          "keep both kidneys of a subject in one fold");
    }
    add<std::uint64_t>(app, "--seed", "master seed", [](PipelineConfig& c, std::uint64_t v) { c.seed = v; });
    add<int>(app, "--threads", "worker threads (default RENOSCAN_THREADS or all cores)",
             [](PipelineConfig& c, int v) { c.threads = std::max(1, v); });
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    for (const auto& o : overrides) o(c);
    if (std::getenv("RENOSCAN_THREADS")) c.threads = std::min(c.threads, default_threads());
    if (c.normalize.n0 < 32) fail(ErrorKind::validation, "n0 must be >= 32");
    if (!(c.stack.canny.low_frac > 0.0 && c.stack.canny.low_frac < c.stack.canny.high_frac && c.stack.canny.high_frac <= 1.0))
      fail(ErrorKind::validation, "canny thresholds need 0 < low < high <= 1");
    if (c.hog_channel != "r" && c.hog_channel != "g" && c.hog_channel != "b")
      fail(ErrorKind::validation, "hog channel must be r, g or b");
    return c;
  }
};

std::vector<eval::SideFilter> parse_sides(const std::string& s) {
  if (s == "all") return {eval::SideFilter::left, eval::SideFilter::right, eval::SideFilter::both};
  std::vector<eval::SideFilter> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    out.push_back(eval::side_filter_from_string(s.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

void print_stages(const std::map<std::string, StageStats>& stages) {
  for (const auto& [name, s] : stages)
    std::cout << "cache " << name << ": " << s.hits << " hit, " << s.misses << " miss\n";
}

void print_failures(const std::vector<RowFailure>& failures) {
  for (const auto& f : failures) std::cerr << "skipped " << f.sample_id << ": " << f.message << "\n";
}

nlohmann::json fit_json(const EllipseFit& f) {
  return {{"cx", f.cx}, {"cy", f.cy}, {"major", f.major}, {"minor", f.minor}, {"theta", f.theta}};
}

eval::Dataset read_features(const std::string& path, const std::string& set, const std::string& side) {
  eval::Dataset d = load_feature_csv(path);
  if (!set.empty()) d = select_features(d, FeatureSet::parse(set));
  return eval::side_split(d, eval::side_filter_from_string(side));
}

svm::TrainingSet training_set(const eval::Dataset& d) {
  svm::TrainingSet t{svm::FeatureMatrix(d.samples.size(), d.dims()), {}};
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    std::copy(d.samples[i].features.begin(), d.samples[i].features.end(), t.features.row(i).begin());
    t.labels.push_back(d.samples[i].label);
  }
  return t;
}

int run(int argc, char** argv) {
  CLI::App app{"renoscan: ultrasound kidney classification pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

  // normalize
  auto* normalize = app.add_subcommand("normalize", "fit the kidney ellipse and resample to n0 x n0");
  std::string image, mask, out_dir;
  ConfigFlags nflags;
  normalize->add_option("--image", image, "input image (PNG or PGM)")->required()->check(CLI::ExistingFile);
  normalize->add_option("--mask", mask, "kidney mask (PNG or PGM, >= 128 inside)")->required()->check(CLI::ExistingFile);
  normalize->add_option("--out-dir", out_dir, "output directory")->required();
  nflags.attach(normalize, false, false);

  // featmaps
  auto* featmaps = app.add_subcommand("featmaps", "write the intensity, gradient and distance planes");
  ConfigFlags fmflags;
  featmaps->add_option("--image", image, "input image")->required()->check(CLI::ExistingFile);
  featmaps->add_option("--mask", mask, "kidney mask")->required()->check(CLI::ExistingFile);
  featmaps->add_option("--out-dir", out_dir, "output directory")->required();
  fmflags.attach(featmaps, false, false);

  // features
  auto* features = app.add_subcommand("features", "extract a feature table for a manifest");
  std::string manifest_path, set_name = "CNN+HOG+GEOME", out_path;
  bool skip_bad = false;
  ConfigFlags fflags;
  features->add_option("--manifest", manifest_path, "manifest CSV")->required()->check(CLI::ExistingFile);
  features->add_option("--features", set_name, "feature set, e.g. HOG+GEOME or all")->capture_default_str();
  features->add_option("--out-dir", out_dir, "output directory (features.csv and cache/)")->required();
  features->add_flag("--skip-bad", skip_bad, "drop failing rows instead of aborting");
  fflags.attach(features, true, false);

  // cnn-extract
  auto* cnn_extract = app.add_subcommand("cnn-extract", "CNN activations for a manifest");
  std::string save_weights;
  bool print_shapes = false;
  ConfigFlags cflags;
  cnn_extract->add_option("--manifest", manifest_path, "manifest CSV")->check(CLI::ExistingFile);
  cnn_extract->add_option("--out-dir", out_dir, "output directory");
  cnn_extract->add_option("--save-weights", save_weights, "also write the weight archive in use to this directory");
  cnn_extract->add_flag("--print-shapes", print_shapes, "print per-layer output shapes and exit");
  cnn_extract->add_flag("--skip-bad", skip_bad, "drop failing rows instead of aborting");
  cflags.attach(cnn_extract, true, false);

  // train
  auto* train = app.add_subcommand("train", "fit a linear SVM on a feature table");
  std::string features_path, model_path, side = "both";
  std::string train_set;
  ConfigFlags tflags;
  train->add_option("--features", features_path, "feature CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--set", train_set, "restrict to a feature set");
  train->add_option("--side", side, "left|right|both")->capture_default_str();
  train->add_option("--model", model_path, "output model JSON")->required();
  tflags.attach(train, false, true);

  // predict
  auto* predict = app.add_subcommand("predict", "decision values for a feature table");
  predict->add_option("--model", model_path, "model JSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--features", features_path, "feature CSV")->required()->check(CLI::ExistingFile);
  predict->add_option("--side", side, "left|right|both")->capture_default_str();
  predict->add_option("--out", out_path, "predictions CSV")->required();

  // cv
  auto* cv = app.add_subcommand("cv", "repeated stratified cross-validation");
  std::string sides = "both";
  ConfigFlags vflags;
  auto* cv_manifest = cv->add_option("--manifest", manifest_path, "manifest CSV")->check(CLI::ExistingFile);
  cv->add_option("--features", features_path, "precomputed feature CSV")->check(CLI::ExistingFile)->excludes(cv_manifest);
  cv->add_option("--set", set_name, "feature set")->capture_default_str();
  cv->add_option("--sides", sides, "comma list of left,right,both or all")->capture_default_str();
  cv->add_option("--out-dir", out_dir, "output directory")->required();
  cv->add_flag("--skip-bad", skip_bad, "drop failing rows instead of aborting");
  vflags.attach(cv, true, true);

  // compare
  auto* compare = app.add_subcommand("compare", "grid of 7 feature sets x 3 sides");
  ConfigFlags gflags;
  compare->add_option("--manifest", manifest_path, "manifest CSV")->required()->check(CLI::ExistingFile);
  compare->add_option("--out-dir", out_dir, "output directory")->required();
  compare->add_flag("--skip-bad", skip_bad, "drop failing rows instead of aborting");
  gflags.attach(compare, true, true);

  // phantom-gen
  auto* phantom = app.add_subcommand("phantom-gen", "synthetic kidney corpus");
  PhantomConfig pc;
  std::string mode = "holes";
  phantom->add_option("--out-dir", out_dir, "output directory")->required();
  phantom->add_option("--count", pc.count, "number of kidneys (two per subject)")->capture_default_str();
  phantom->add_option("--size", pc.width, "image width and height")->capture_default_str();
  phantom->add_option("--seed", pc.seed, "seed")->capture_default_str();
  phantom->add_option("--mode", mode, "holes|shape-only")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::validation);
  }

  if (normalize->parsed()) {
    const PipelineConfig cfg = nflags.resolve();
    const GrayImage img = io::load_image(image);
    const BinaryMask m = io::load_mask(mask);
    const EllipseFit fit = fit_ellipse(m);
    const NormalizedImage n = normalize_kidney(img, m, fit, cfg.normalize);
    io::save_png(fs::path(out_dir) / "normalized.png", n.image);
    io::save_png(fs::path(out_dir) / "normalized_mask.png", n.mask);
    nlohmann::json j{{"tool", kToolName},       {"tool_version", kToolVersion}, {"config_hash", config_hash(cfg)},
                     {"fit", fit_json(fit)}, {"refit", fit_json(fit_ellipse(n.mask))}};
    io::write_text_atomic(fs::path(out_dir) / "fit.json", j.dump(2) + "\n");
    std::cout << "theta " << fit.theta << " major " << fit.major << " minor " << fit.minor << "\n";
    return 0;
  }

  if (featmaps->parsed()) {
    const PipelineConfig cfg = fmflags.resolve();
    const PreparedKidney k = prepare_kidney(io::load_image(image), io::load_mask(mask), cfg);
    const fs::path dir(out_dir);
    io::save_png(dir / "r.png", k.stack.r);
    io::save_png(dir / "g.png", k.stack.g);
    io::save_png(dir / "b.png", k.stack.b);
    io::save_png(dir / "edges.png", canny_edges(k.stack.r, cfg.stack.canny).to_mask());
    io::save_rgb_png(dir / "stack.png", k.stack.r, k.stack.g, k.stack.b);
    return 0;
  }

  if (features->parsed()) {
    const PipelineConfig cfg = fflags.resolve();
    const Manifest m = load_manifest(manifest_path);
    const fs::path dir(out_dir);
    FeatureExtractor ex(cfg, dir / "cache");
    RunStats stats;
    auto res = extract_features(m, ex, FeatureSet::parse(set_name), stats);
    print_failures(res.failures);
    if (!res.failures.empty() && !skip_bad) fail(ErrorKind::data, describe_failures(res.failures));
    save_feature_csv(dir / "features.csv", res.data, config_hash(cfg));
    print_stages(stats.snapshot());
    std::cout << res.data.samples.size() << " rows x " << res.data.feature_names.size() << " features -> "
              << (dir / "features.csv").string() << "\n";
    return 0;
  }

  if (cnn_extract->parsed()) {
    const PipelineConfig cfg = cflags.resolve();
    if (print_shapes) {
      const cnn::NetworkSpec spec = cfg.cnn.spec_path.empty() ? cnn::alexnet_spec() : cnn::load_spec(cfg.cnn.spec_path);
      const auto shapes = cnn::infer_shapes(spec);
      std::cout << "input " << cnn::to_string(spec.input) << "\n";
      for (std::size_t i = 0; i < spec.layers.size(); ++i)
        std::cout << spec.layers[i].name << " " << cnn::to_string(shapes[i]) << "\n";
      return 0;
    }
    if (!save_weights.empty()) {
      const cnn::NetworkSpec spec = cfg.cnn.spec_path.empty() ? cnn::alexnet_spec() : cnn::load_spec(cfg.cnn.spec_path);
      const cnn::WeightArchive w = cfg.cnn.weights_path.empty() ? cnn::random_weights(spec, derive_seed(cfg.seed, "cnn-weights"))
                                                                : cnn::load_weights(cfg.cnn.weights_path);
      cnn::validate(w, spec);
      cnn::save_weights(save_weights, w);
      std::cout << "weights -> " << save_weights << "\n";
    }
    if (manifest_path.empty()) {
      if (save_weights.empty()) fail(ErrorKind::validation, "cnn-extract needs --manifest, --save-weights or --print-shapes");
      return 0;
    }
    if (out_dir.empty()) fail(ErrorKind::validation, "cnn-extract: --out-dir is required with --manifest");
    const Manifest m = load_manifest(manifest_path);
    const fs::path dir(out_dir);
    FeatureExtractor ex(cfg, dir / "cache");
    RunStats stats;
    auto res = extract_features(m, ex, FeatureSet(1u), stats);
    print_failures(res.failures);
    if (!res.failures.empty() && !skip_bad) fail(ErrorKind::data, describe_failures(res.failures));
    save_feature_csv(dir / "cnn_features.csv", res.data, config_hash(cfg));
    print_stages(stats.snapshot());
    return 0;
  }

  if (train->parsed()) {
    const PipelineConfig cfg = tflags.resolve();
    const eval::Dataset d = read_features(features_path, train_set, side);
    svm::TrainConfig tc = cfg.svm;
    tc.seed = derive_seed(cfg.seed, "svm");
    const auto res = svm::train(training_set(d), tc);
    svm::SvmModel model = res.model;
    model.feature_schema = d.feature_names;
    nlohmann::json j{{"tool", kToolName},
                     {"tool_version", kToolVersion},
                     {"config_hash", config_hash(cfg)},
                     {"side", side},
                     {"samples", d.samples.size()},
                     {"epochs", res.epochs},
                     {"converged", res.converged},
                     {"model", svm::to_json(model)}};
    io::write_text_atomic(model_path, j.dump(2) + "\n");
    std::cout << "trained on " << d.samples.size() << " rows, " << res.epochs << " epochs"
              << (res.converged ? "" : " (not converged)") << "\n";
    return 0;
  }

  if (predict->parsed()) {
    const auto bytes = io::read_bytes(model_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::validation, model_path + ": " + e.what());
    }
    const svm::SvmModel model = svm::model_from_json(j.contains("model") ? j["model"] : j);
    eval::Dataset d = eval::side_split(load_feature_csv(features_path), eval::side_filter_from_string(side));
    if (!model.feature_schema.empty()) {
      std::map<std::string, std::size_t> col;
      for (std::size_t i = 0; i < d.feature_names.size(); ++i) col[d.feature_names[i]] = i;
      for (auto& s : d.samples) {
        std::vector<double> picked;
        for (const auto& name : model.feature_schema) {
          const auto it = col.find(name);
          if (it == col.end()) fail(ErrorKind::validation, "feature table lacks column " + name + " required by the model");
          picked.push_back(s.features[it->second]);
        }
        s.features = std::move(picked);
      }
    }
    std::string out = provenance_line(j.value("config_hash", std::string())) + "\nsample_id,side,label,decision,predicted\n";
    std::vector<eval::Scored> scored;
    for (const auto& s : d.samples) {
      const double v = svm::decision_value(model, s.features);
      scored.push_back({v, s.label});
      out += s.sample_id + "," + eval::to_string(s.side) + "," + std::to_string(s.label) + "," + format_double(v) + "," +
             std::to_string(svm::label_of(v)) + "\n";
    }
    io::write_text_atomic(out_path, out);
    std::cout << "accuracy " << eval::accuracy(scored) << " on " << scored.size() << " rows\n";
    return 0;
  }

  if (cv->parsed()) {
    const PipelineConfig cfg = vflags.resolve();
    const FeatureSet set = FeatureSet::parse(set_name);
    const fs::path dir(out_dir);
    const auto side_list = parse_sides(sides);
    auto summarize = [](const std::string& s, const eval::CvReport& r) {
      std::printf("%-5s accuracy %.4f +- %.4f  auc %.4f +- %.4f\n", s.c_str(), r.accuracy.mean, r.accuracy.std, r.auc.mean,
                  r.auc.std);
    };
    if (!manifest_path.empty()) {
      const auto res = run_pipeline(load_manifest(manifest_path), cfg, set, dir, side_list, skip_bad);
      print_failures(res.failures);
      print_stages(res.stages);
      for (const auto& [s, r] : res.reports) summarize(s, r);
      return 0;
    }
    if (features_path.empty()) fail(ErrorKind::validation, "cv needs --manifest or --features");
    const eval::Dataset all = select_features(load_feature_csv(features_path), set);
    const std::string hash = config_hash(cfg);
    for (const auto s : side_list) {
      const auto rep = eval::cross_validate(eval::side_split(all, s), cv_config(cfg));
      const std::string name = eval::to_string(s);
      io::write_text_atomic(dir / ("report_" + name + ".json"), report_json(rep, set.name(), s, hash).dump(2) + "\n");
      io::write_text_atomic(dir / ("roc_" + name + ".csv"), roc_csv(rep, hash));
      summarize(name, rep);
    }
    return 0;
  }

  if (compare->parsed()) {
    const PipelineConfig cfg = gflags.resolve();
    const auto res = compare_feature_sets(load_manifest(manifest_path), cfg, out_dir, skip_bad);
    print_failures(res.failures);
    print_stages(res.stages);
    std::cout << to_csv(res.grid, cfg);
    return 0;
  }

  if (phantom->parsed()) {
    pc.height = pc.width;
    if (mode == "holes") pc.mode = PhantomMode::holes;
    else if (mode == "shape-only" || mode == "shape_only") pc.mode = PhantomMode::shape_only;
    else fail(ErrorKind::validation, "--mode must be holes or shape-only");
    if (pc.width < 64) fail(ErrorKind::validation, "--size must be >= 64");
    const Manifest m = write_phantom_corpus(out_dir, pc);
    std::cout << m.rows.size() << " kidneys -> " << (fs::path(out_dir) / "manifest.csv").string() << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const renoscan::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(renoscan::ErrorKind::validation);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
