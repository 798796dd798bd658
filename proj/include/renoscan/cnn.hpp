#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "renoscan/error.hpp"
#include "renoscan/featuremaps.hpp"
#include "renoscan/image_io.hpp"
#include "renoscan/parallel.hpp"

namespace renoscan::cnn {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

/// Activation tensor, (row, column, channel) with channel fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(shape.count(), fill) {}
  Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count()) throw std::invalid_argument("Tensor: data length does not match shape");
  }

  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> data() const& noexcept { return data_; }
  std::span<float> data() & noexcept { return data_; }
  void data() && = delete;

  float operator()(int h, int w, int c) const { return data_[index(h, w, c)]; }
  float& operator()(int h, int w, int c) { return data_[index(h, w, c)]; }

 private:
  std::size_t index(int h, int w, int c) const noexcept {
    return (static_cast<std::size_t>(h) * static_cast<std::size_t>(shape_.width) + static_cast<std::size_t>(w)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }

  Shape shape_;
  std::vector<float> data_;
};

struct Convolution {
  int kernel_h = 1;
  int kernel_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;
};
struct Relu {};
struct LocalResponseNorm {
  int depth = 5;
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;
};
struct MaxPool {
  int window = 3;
  int stride = 2;
};
struct FullyConnected {
  int in = 1;
  int out = 1;
};
struct Softmax {};

using LayerOp = std::variant<Convolution, Relu, LocalResponseNorm, MaxPool, FullyConnected, Softmax>;

struct Layer {
  std::string name;
  LayerOp op;
};

inline bool has_weights(const Layer& layer) {
  return std::holds_alternative<Convolution>(layer.op) || std::holds_alternative<FullyConnected>(layer.op);
}

struct NetworkSpec {
  Shape input{227, 227, 3};
  std::vector<Layer> layers;

  const Layer* find(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return &l;
    return nullptr;
  }
};

inline Shape conv_output_shape(const Shape& in, const Convolution& c) {
  return {(in.height + 2 * c.pad - c.kernel_h) / c.stride + 1, (in.width + 2 * c.pad - c.kernel_w) / c.stride + 1,
          c.out_channels};
}

/// Static shape inference; entry i is the output shape of layer i.
/// Throws a validation error naming the first layer that does not compose.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  std::vector<Shape> shapes;
  Shape cur = spec.input;
  if (cur.height < 1 || cur.width < 1 || cur.channels < 1) fail(ErrorKind::validation, "network input shape is empty");
  for (const auto& layer : spec.layers) {
    auto bad = [&](const std::string& why) {
      fail(ErrorKind::validation, "layer " + layer.name + ": " + why + " (input " + to_string(cur) + ")");
    };
    std::visit(
        [&](const auto& op) {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Convolution>) {
            if (op.groups < 1 || op.in_channels % op.groups != 0 || op.out_channels % op.groups != 0)
              bad("group count must divide in and out channels");
            if (op.in_channels != cur.channels) bad("expects " + std::to_string(op.in_channels) + " input channels");
            if (op.stride < 1 || op.pad < 0 || op.kernel_h < 1 || op.kernel_w < 1) bad("invalid kernel geometry");
            if (cur.height + 2 * op.pad < op.kernel_h || cur.width + 2 * op.pad < op.kernel_w) bad("kernel larger than input");
            cur = conv_output_shape(cur, op);
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            if (op.window < 1 || op.stride < 1 || cur.height < op.window || cur.width < op.window) bad("invalid pooling window");
            cur = {(cur.height - op.window) / op.stride + 1, (cur.width - op.window) / op.stride + 1, cur.channels};
          } else if constexpr (std::is_same_v<T, FullyConnected>) {
            if (static_cast<std::size_t>(op.in) != cur.count()) bad("expects " + std::to_string(op.in) + " inputs");
            if (op.out < 1) bad("needs at least one output");
            cur = {1, 1, op.out};
          } else if constexpr (std::is_same_v<T, LocalResponseNorm>) {
            if (op.depth < 1) bad("LRN depth must be >= 1");
          }
        },
        layer.op);
    shapes.push_back(cur);
  }
  return shapes;
}

/// AlexNet topology for an n0 x n0 x 3 input (pad/stride per the canonical table).
inline NetworkSpec alexnet_spec() {
  NetworkSpec s;
  s.input = {227, 227, 3};
  auto add = [&](std::string name, LayerOp op) { s.layers.push_back({std::move(name), std::move(op)}); };
  add("conv1", Convolution{11, 11, 3, 96, 4, 0, 1});
  add("relu1", Relu{});
  add("norm1", LocalResponseNorm{});
  add("pool1", MaxPool{3, 2});
  add("conv2", Convolution{5, 5, 96, 256, 1, 2, 2});
  add("relu2", Relu{});
  add("norm2", LocalResponseNorm{});
  add("pool2", MaxPool{3, 2});
  add("conv3", Convolution{3, 3, 256, 384, 1, 1, 1});
  add("relu3", Relu{});
  add("conv4", Convolution{3, 3, 384, 384, 1, 1, 2});
  add("relu4", Relu{});
  add("conv5", Convolution{3, 3, 384, 256, 1, 1, 2});
  add("relu5", Relu{});
  add("pool5", MaxPool{3, 2});
  add("fc6", FullyConnected{9216, 4096});
  add("relu6", Relu{});
  add("fc7", FullyConnected{4096, 4096});
  add("relu7", Relu{});
  add("fc8", FullyConnected{4096, 1000});
  add("prob", Softmax{});
  return s;
}

/// Post-ReLU output of the second fully-connected layer.
inline constexpr const char* kDefaultTap = "relu7";

// ---------------------------------------------------------------------------
// JSON form of NetworkSpec

inline nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : spec.layers) {
    nlohmann::json j;
    j["name"] = layer.name;
    std::visit(
        [&](const auto& op) {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Convolution>) {
            j["type"] = "conv";
            j["kernel"] = {op.kernel_h, op.kernel_w};
            j["in"] = op.in_channels;
            j["out"] = op.out_channels;
            j["stride"] = op.stride;
            j["pad"] = op.pad;
            j["groups"] = op.groups;
          } else if constexpr (std::is_same_v<T, Relu>) {
            j["type"] = "relu";
          } else if constexpr (std::is_same_v<T, LocalResponseNorm>) {
            j["type"] = "lrn";
            j["depth"] = op.depth;
            j["k"] = op.k;
            j["alpha"] = op.alpha;
            j["beta"] = op.beta;
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            j["type"] = "maxpool";
            j["window"] = op.window;
            j["stride"] = op.stride;
          } else if constexpr (std::is_same_v<T, FullyConnected>) {
            j["type"] = "fc";
            j["in"] = op.in;
            j["out"] = op.out;
          } else {
            j["type"] = "softmax";
          }
        },
        layer.op);
    layers.push_back(std::move(j));
  }
  return {{"input", {{"height", spec.input.height}, {"width", spec.input.width}, {"channels", spec.input.channels}}},
          {"layers", std::move(layers)}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    const auto& in = j.at("input");
    spec.input = {in.at("height").get<int>(), in.at("width").get<int>(), in.at("channels").get<int>()};
    for (const auto& l : j.at("layers")) {
      const std::string type = l.at("type").get<std::string>();
      const std::string name = l.at("name").get<std::string>();
      if (type == "conv") {
        const auto& k = l.at("kernel");
        spec.layers.push_back({name, Convolution{k.at(0).get<int>(), k.at(1).get<int>(), l.at("in").get<int>(),
                                                 l.at("out").get<int>(), l.value("stride", 1), l.value("pad", 0),
                                                 l.value("groups", 1)}});
      } else if (type == "relu") {
        spec.layers.push_back({name, Relu{}});
      } else if (type == "lrn") {
        spec.layers.push_back({name, LocalResponseNorm{l.value("depth", 5), l.value("k", 2.0), l.value("alpha", 1e-4),
                                                       l.value("beta", 0.75)}});
      } else if (type == "maxpool") {
        spec.layers.push_back({name, MaxPool{l.at("window").get<int>(), l.at("stride").get<int>()}});
      } else if (type == "fc") {
        spec.layers.push_back({name, FullyConnected{l.at("in").get<int>(), l.at("out").get<int>()}});
      } else if (type == "softmax") {
        spec.layers.push_back({name, Softmax{}});
      } else {
        fail(ErrorKind::validation, "layer " + name + ": unknown type '" + type + "'");
      }
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation, std::string("network spec: ") + e.what());
  }
}

inline NetworkSpec load_spec(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  try {
    return spec_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::validation, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Weights

/// Convolution kernels are stored (kh, kw, in/groups, out); fully-connected (out, in).
struct LayerWeights {
  std::vector<int> kernel_shape;
  std::vector<float> kernel;
  std::vector<int> bias_shape;
  std::vector<float> bias;
};

struct WeightArchive {
  std::map<std::string, LayerWeights> layers;
  /// Optional (h, w, c) mean image subtracted before the first layer.
  std::vector<int> mean_image_shape;
  std::vector<float> mean_image;
};

inline std::vector<int> expected_kernel_shape(const Layer& layer) {
  if (const auto* c = std::get_if<Convolution>(&layer.op))
    return {c->kernel_h, c->kernel_w, c->in_channels / c->groups, c->out_channels};
  if (const auto* f = std::get_if<FullyConnected>(&layer.op)) return {f->out, f->in};
  return {};
}

inline int output_count(const Layer& layer) {
  if (const auto* c = std::get_if<Convolution>(&layer.op)) return c->out_channels;
  if (const auto* f = std::get_if<FullyConnected>(&layer.op)) return f->out;
  return 0;
}

inline std::string shape_string(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Every weighted layer must have exactly one kernel and bias of matching shape,
/// and the archive may not name layers the spec lacks.
inline void validate(const WeightArchive& archive, const NetworkSpec& spec) {
  infer_shapes(spec);
  for (const auto& [name, w] : archive.layers) {
    const Layer* layer = spec.find(name);
    if (layer == nullptr) fail(ErrorKind::validation, "weight archive: layer " + name + " is not in the network spec");
    if (!has_weights(*layer)) fail(ErrorKind::validation, "weight archive: layer " + name + " takes no weights");
  }
  for (const auto& layer : spec.layers) {
    if (!has_weights(layer)) continue;
    const auto it = archive.layers.find(layer.name);
    if (it == archive.layers.end()) fail(ErrorKind::validation, "weight archive: missing weights for layer " + layer.name);
    const auto ks = expected_kernel_shape(layer);
    if (it->second.kernel_shape != ks)
      fail(ErrorKind::validation, "weight archive: layer " + layer.name + " kernel shape " +
                                      shape_string(it->second.kernel_shape) + " != " + shape_string(ks));
    if (it->second.bias_shape != std::vector<int>{output_count(layer)})
      fail(ErrorKind::validation, "weight archive: layer " + layer.name + " bias shape " +
                                      shape_string(it->second.bias_shape) + " != [" + std::to_string(output_count(layer)) + "]");
  }
  if (!archive.mean_image_shape.empty() &&
      archive.mean_image_shape != std::vector<int>{spec.input.height, spec.input.width, spec.input.channels}) {
    fail(ErrorKind::validation, "weight archive: mean image shape does not match network input");
  }
}

namespace detail {

inline std::size_t product(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline void append_le(std::vector<std::uint8_t>& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[start + 4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
}

inline std::vector<float> read_le(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count) {
  std::vector<float> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[offset + 4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    v[i] = std::bit_cast<float>(bits);
  }
  return v;
}

}  // namespace detail

/// Writes `manifest.json` and `weights.bin` (little-endian float32) into `dir`.
inline void save_weights(const std::filesystem::path& dir, const WeightArchive& archive) {
  std::vector<std::uint8_t> payload;
  nlohmann::json tensors = nlohmann::json::array();
  auto put = [&](const std::string& layer, const std::string& role, const std::vector<int>& shape,
                 const std::vector<float>& values) {
    if (detail::product(shape) != values.size())
      throw std::invalid_argument("save_weights: tensor " + layer + "/" + role + " size does not match its shape");
    tensors.push_back({{"layer", layer}, {"role", role}, {"shape", shape}, {"offset", payload.size()}, {"count", values.size()}});
    detail::append_le(payload, values);
  };
  for (const auto& [name, w] : archive.layers) {
    put(name, "kernel", w.kernel_shape, w.kernel);
    put(name, "bias", w.bias_shape, w.bias);
  }
  if (!archive.mean_image_shape.empty()) put("input", "mean", archive.mean_image_shape, archive.mean_image);
  nlohmann::json manifest{{"format", "renoscan.weights"}, {"version", 1}, {"payload", "weights.bin"},
                          {"payload_bytes", payload.size()}, {"tensors", std::move(tensors)}};
  io::write_bytes_atomic(dir / "weights.bin", payload);
  io::write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Reads an archive directory. Truncated payloads, malformed manifests and
/// non-finite weights are rejected; use `validate` to check it against a spec.
inline WeightArchive load_weights(const std::filesystem::path& dir) {
  const auto manifest_bytes = io::read_bytes(dir / "manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::validation, "weight manifest: " + std::string(e.what()));
  }
  const auto payload = io::read_bytes(dir / manifest.value("payload", std::string("weights.bin")));
  WeightArchive archive;
  try {
    for (const auto& t : manifest.at("tensors")) {
      const auto layer = t.at("layer").get<std::string>();
      const auto role = t.at("role").get<std::string>();
      const auto shape = t.at("shape").get<std::vector<int>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (detail::product(shape) != count)
        fail(ErrorKind::validation, "weight archive: tensor " + layer + "/" + role + " count does not match shape");
      if (offset % 4 != 0 || offset + 4 * count > payload.size())
        fail(ErrorKind::data, "weight archive: truncated payload (tensor " + layer + "/" + role + ")");
      auto values = detail::read_le(payload, offset, count);
      for (float v : values)
        if (!std::isfinite(v)) fail(ErrorKind::numeric, "weight archive: non-finite weight in layer " + layer);
      if (role == "kernel") {
        auto& w = archive.layers[layer];
        if (!w.kernel.empty()) fail(ErrorKind::validation, "weight archive: duplicate kernel for layer " + layer);
        w.kernel_shape = shape;
        w.kernel = std::move(values);
      } else if (role == "bias") {
        auto& w = archive.layers[layer];
        if (!w.bias.empty()) fail(ErrorKind::validation, "weight archive: duplicate bias for layer " + layer);
        w.bias_shape = shape;
        w.bias = std::move(values);
      } else if (role == "mean") {
        archive.mean_image_shape = shape;
        archive.mean_image = std::move(values);
      } else {
        fail(ErrorKind::validation, "weight archive: unknown tensor role '" + role + "'");
      }
    }
    if (manifest.contains("payload_bytes") && manifest["payload_bytes"].get<std::size_t>() != payload.size()) {
      fail(ErrorKind::data, "weight archive: truncated payload (expected " +
                                std::to_string(manifest["payload_bytes"].get<std::size_t>()) + " bytes, found " +
                                std::to_string(payload.size()) + ")");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation, std::string("weight manifest: ") + e.what());
  }
  return archive;
}

/// He-normal kernels and zero biases from a fixed seed; the stand-in for pre-trained weights.
inline WeightArchive random_weights(const NetworkSpec& spec, std::uint64_t seed) {
  infer_shapes(spec);
  WeightArchive archive;
  std::mt19937_64 rng(seed);
  for (const auto& layer : spec.layers) {
    if (!has_weights(layer)) continue;
    LayerWeights w;
    w.kernel_shape = expected_kernel_shape(layer);
    const std::size_t n = detail::product(w.kernel_shape);
    const std::size_t fan_in = std::holds_alternative<FullyConnected>(layer.op)
                                   ? static_cast<std::size_t>(w.kernel_shape[1])
                                   : n / static_cast<std::size_t>(w.kernel_shape[3]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    w.kernel.resize(n);
    for (auto& v : w.kernel) v = static_cast<float>(dist(rng));
    w.bias_shape = {output_count(layer)};
    w.bias.assign(static_cast<std::size_t>(output_count(layer)), 0.0f);
    archive.layers.emplace(layer.name, std::move(w));
  }
  return archive;
}

// ---------------------------------------------------------------------------
// Layer kernels

/// Direct evaluation of the convolution sum; the reference the fast path must match.
inline Tensor conv2d_naive(const Tensor& in, std::span<const float> kernel, std::span<const float> bias, const Convolution& p) {
  const Shape os = conv_output_shape(in.shape(), p);
  Tensor out(os);
  const int cg_in = p.in_channels / p.groups, cg_out = p.out_channels / p.groups;
  for (int oh = 0; oh < os.height; ++oh)
    for (int ow = 0; ow < os.width; ++ow)
      for (int o = 0; o < p.out_channels; ++o) {
        const int g = o / cg_out;
        float acc = bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < p.kernel_h; ++i) {
          const int ih = oh * p.stride - p.pad + i;
          if (ih < 0 || ih >= in.shape().height) continue;
          for (int j = 0; j < p.kernel_w; ++j) {
            const int iw = ow * p.stride - p.pad + j;
            if (iw < 0 || iw >= in.shape().width) continue;
            for (int c = 0; c < cg_in; ++c) {
              const std::size_t k = ((static_cast<std::size_t>(i) * static_cast<std::size_t>(p.kernel_w) + static_cast<std::size_t>(j)) *
                                         static_cast<std::size_t>(cg_in) + static_cast<std::size_t>(c)) *
                                        static_cast<std::size_t>(p.out_channels) + static_cast<std::size_t>(o);
              acc += in(ih, iw, g * cg_in + c) * kernel[k];
            }
          }
        }
        out(oh, ow, o) = acc;
      }
  return out;
}

/// im2col + row-blocked matrix multiply. Each output element accumulates its
/// products in the same fixed order whatever the thread count.
inline Tensor conv2d(const Tensor& in, std::span<const float> kernel, std::span<const float> bias, const Convolution& p,
                     int threads = 1) {
  const Shape is = in.shape();
  const Shape os = conv_output_shape(is, p);
  const int cg_in = p.in_channels / p.groups, cg_out = p.out_channels / p.groups;
  const std::size_t patch = static_cast<std::size_t>(p.kernel_h) * static_cast<std::size_t>(p.kernel_w) * static_cast<std::size_t>(cg_in);
  const std::size_t positions = static_cast<std::size_t>(os.height) * static_cast<std::size_t>(os.width);
  const std::size_t out_stride = static_cast<std::size_t>(p.out_channels);
  Tensor out(os);
  std::vector<float> cols(positions * patch);

  constexpr std::size_t kRowBlock = 4;
  for (int g = 0; g < p.groups; ++g) {
    parallel_for(static_cast<std::size_t>(os.height), threads, [&](std::size_t oh) {
      for (int ow = 0; ow < os.width; ++ow) {
        float* dst = cols.data() + (oh * static_cast<std::size_t>(os.width) + static_cast<std::size_t>(ow)) * patch;
        for (int i = 0; i < p.kernel_h; ++i) {
          const int ih = static_cast<int>(oh) * p.stride - p.pad + i;
          for (int j = 0; j < p.kernel_w; ++j) {
            const int iw = ow * p.stride - p.pad + j;
            if (ih < 0 || ih >= is.height || iw < 0 || iw >= is.width) {
              std::fill(dst, dst + cg_in, 0.0f);
            } else {
              const float* src = &in.data()[(static_cast<std::size_t>(ih) * static_cast<std::size_t>(is.width) + static_cast<std::size_t>(iw)) *
                                                static_cast<std::size_t>(is.channels) + static_cast<std::size_t>(g * cg_in)];
              std::copy(src, src + cg_in, dst);
            }
            dst += cg_in;
          }
        }
      }
    });

    const float* wbase = kernel.data() + static_cast<std::size_t>(g * cg_out);
    const float* bbase = bias.data() + static_cast<std::size_t>(g * cg_out);
    const std::size_t blocks = (positions + kRowBlock - 1) / kRowBlock;
    parallel_for(blocks, threads, [&](std::size_t blk) {
      const std::size_t p0 = blk * kRowBlock;
      const std::size_t rows = std::min(kRowBlock, positions - p0);
      float* acc[kRowBlock];
      const float* a[kRowBlock];
      for (std::size_t r = 0; r < rows; ++r) {
        acc[r] = out.data().data() + (p0 + r) * out_stride + static_cast<std::size_t>(g * cg_out);
        a[r] = cols.data() + (p0 + r) * patch;
        std::copy(bbase, bbase + cg_out, acc[r]);
      }
      for (std::size_t k = 0; k < patch; ++k) {
        const float* wrow = wbase + k * out_stride;
        for (std::size_t r = 0; r < rows; ++r) {
          const float av = a[r][k];
          float* o = acc[r];
          for (int c = 0; c < cg_out; ++c) o[c] += av * wrow[c];
        }
      }
    });
  }
  return out;
}

inline void relu_inplace(Tensor& t) {
  for (auto& v : t.data()) v = v > 0.0f ? v : 0.0f;
}

/// Cross-channel normalization: a / (k + alpha * sum of squares over `depth` neighbors)^beta.
inline Tensor local_response_norm(const Tensor& in, const LocalResponseNorm& p) {
  Tensor out(in.shape());
  const int nc = in.shape().channels, half = p.depth / 2;
  const std::size_t positions = static_cast<std::size_t>(in.shape().height) * static_cast<std::size_t>(in.shape().width);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    const float* src = in.data().data() + pos * static_cast<std::size_t>(nc);
    float* dst = out.data().data() + pos * static_cast<std::size_t>(nc);
    for (int c = 0; c < nc; ++c) {
      double ss = 0.0;
      for (int d = std::max(0, c - half); d <= std::min(nc - 1, c + half); ++d) ss += static_cast<double>(src[d]) * src[d];
      dst[c] = static_cast<float>(src[c] / std::pow(p.k + p.alpha * ss, p.beta));
    }
  }
  return out;
}

inline Tensor max_pool(const Tensor& in, const MaxPool& p) {
  const Shape is = in.shape();
  const Shape os{(is.height - p.window) / p.stride + 1, (is.width - p.window) / p.stride + 1, is.channels};
  Tensor out(os);
  for (int oh = 0; oh < os.height; ++oh)
    for (int ow = 0; ow < os.width; ++ow)
      for (int c = 0; c < os.channels; ++c) {
        float m = in(oh * p.stride, ow * p.stride, c);
        for (int i = 0; i < p.window; ++i)
          for (int j = 0; j < p.window; ++j) m = std::max(m, in(oh * p.stride + i, ow * p.stride + j, c));
        out(oh, ow, c) = m;
      }
  return out;
}

/// Eight interleaved partial sums per output, combined in a fixed order.
inline Tensor fully_connected(const Tensor& in, std::span<const float> kernel, std::span<const float> bias,
                              const FullyConnected& p, int threads = 1) {
  Tensor out(Shape{1, 1, p.out});
  const float* x = in.data().data();
  const std::size_t n = static_cast<std::size_t>(p.in);
  parallel_for(static_cast<std::size_t>(p.out), threads, [&](std::size_t o) {
    const float* w = kernel.data() + o * n;
    float part[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
      for (std::size_t l = 0; l < 8; ++l) part[l] += w[i + l] * x[i + l];
    float tail = 0.0f;
    for (; i < n; ++i) tail += w[i] * x[i];
    const float sum = ((part[0] + part[1]) + (part[2] + part[3])) + ((part[4] + part[5]) + (part[6] + part[7]));
    out.data()[o] = bias[o] + (sum + tail);
  });
  return out;
}

inline Tensor softmax(const Tensor& in) {
  Tensor out(in.shape());
  const auto src = in.data();
  const float m = *std::max_element(src.begin(), src.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.data()[i] = std::exp(src[i] - m);
    sum += out.data()[i];
  }
  for (auto& v : out.data()) v = static_cast<float>(v / sum);
  return out;
}

// ---------------------------------------------------------------------------
// Inference

struct ForwardOptions {
  std::string tap = kDefaultTap;
  /// Subtracted from the r, g, b planes respectively.
  std::array<float, 3> channel_mean{0.0f, 0.0f, 0.0f};
  /// Subtract the archive's mean image instead of channel means (requires one in the archive).
  bool use_mean_image = false;
  int threads = 1;
};

inline Tensor stack_to_tensor(const ChannelStack& stack) {
  const int h = stack.r.height(), w = stack.r.width();
  if (!stack.r.same_shape(stack.g) || !stack.r.same_shape(stack.b))
    throw std::invalid_argument("stack_to_tensor: channel planes differ in shape");
  Tensor t(Shape{h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      t(y, x, 0) = static_cast<float>(stack.r(x, y));
      t(y, x, 1) = static_cast<float>(stack.g(x, y));
      t(y, x, 2) = static_cast<float>(stack.b(x, y));
    }
  return t;
}

/// Runs every layer up to and including `tap` and returns that activation.
/// `weights` must already satisfy `validate(weights, spec)`.
inline Tensor forward_tensor(const NetworkSpec& spec, const WeightArchive& weights, Tensor input,
                             const ForwardOptions& opts = {}) {
  if (spec.find(opts.tap) == nullptr) fail(ErrorKind::validation, "tap layer '" + opts.tap + "' not found in network spec");
  if (!(input.shape() == spec.input))
    fail(ErrorKind::validation, "input shape " + to_string(input.shape()) + " != network input " + to_string(spec.input));

  if (opts.use_mean_image) {
    if (weights.mean_image.size() != input.data().size())
      fail(ErrorKind::validation, "mean image subtraction requested but the archive has no matching mean image");
    for (std::size_t i = 0; i < input.data().size(); ++i) input.data()[i] -= weights.mean_image[i];
  } else if (input.shape().channels == 3) {
    auto d = input.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= opts.channel_mean[i % 3];
  }

  Tensor cur = std::move(input);
  for (const auto& layer : spec.layers) {
    std::visit(
        [&](const auto& op) {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, Convolution>) {
            const auto& w = weights.layers.at(layer.name);
            cur = conv2d(cur, w.kernel, w.bias, op, opts.threads);
          } else if constexpr (std::is_same_v<T, Relu>) {
            relu_inplace(cur);
          } else if constexpr (std::is_same_v<T, LocalResponseNorm>) {
            cur = local_response_norm(cur, op);
          } else if constexpr (std::is_same_v<T, MaxPool>) {
            cur = max_pool(cur, op);
          } else if constexpr (std::is_same_v<T, FullyConnected>) {
            const auto& w = weights.layers.at(layer.name);
            cur = fully_connected(cur, w.kernel, w.bias, op, opts.threads);
          } else {
            cur = softmax(cur);
          }
        },
        layer.op);
    if (layer.name == opts.tap) break;
  }
  for (float v : cur.data())
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "forward: non-finite activation at layer " + opts.tap);
  return cur;
}

/// Flattened activation at `opts.tap` for a pseudo-color stack.
inline std::vector<float> forward(const NetworkSpec& spec, const WeightArchive& weights, const ChannelStack& stack,
                                  const ForwardOptions& opts = {}) {
  const Tensor t = forward_tensor(spec, weights, stack_to_tensor(stack), opts);
  return {t.data().begin(), t.data().end()};
}

}  // namespace renoscan::cnn
