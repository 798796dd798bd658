#include <renoscan/cnn.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

namespace renoscan::cnn {
namespace {

namespace fs = std::filesystem;

Tensor random_tensor(std::mt19937_64& rng, Shape s) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t(s);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

std::vector<float> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// Textbook convolution in double precision.
std::vector<double> quad_loop_conv(const Tensor& in, const std::vector<float>& k, const std::vector<float>& b,
                                   const Convolution& p, Shape& os) {
  const Shape is = in.shape();
  os = {(is.height + 2 * p.pad - p.kernel_h) / p.stride + 1, (is.width + 2 * p.pad - p.kernel_w) / p.stride + 1,
        p.out_channels};
  const int cin = p.in_channels / p.groups, cout = p.out_channels / p.groups;
  std::vector<double> out(os.count());
  for (int h = 0; h < os.height; ++h)
    for (int w = 0; w < os.width; ++w)
      for (int o = 0; o < p.out_channels; ++o) {
        double s = b[o];
        for (int i = 0; i < p.kernel_h; ++i)
          for (int j = 0; j < p.kernel_w; ++j)
            for (int c = 0; c < cin; ++c) {
              const int y = h * p.stride - p.pad + i, x = w * p.stride - p.pad + j;
              if (y < 0 || x < 0 || y >= is.height || x >= is.width) continue;
              const int ch = (o / cout) * cin + c;
              s += static_cast<double>(in(y, x, ch)) * k[((i * p.kernel_w + j) * cin + c) * p.out_channels + o];
            }
        out[(static_cast<std::size_t>(h) * os.width + w) * os.channels + o] = s;
      }
  return out;
}

TEST(Conv, OutputSizeFormula) {
  const Convolution c{11, 11, 3, 96, 4, 0, 1};
  EXPECT_EQ(conv_output_shape({227, 227, 3}, c), (Shape{55, 55, 96}));
}

TEST(Conv, ScalarMultiplyAdd) {
  const Tensor in(Shape{1, 1, 1}, std::vector<float>{2.0f});
  const std::vector<float> k{3.0f}, b{1.0f};
  const Convolution c{};
  const Tensor fast = conv2d(in, k, b, c), naive = conv2d_naive(in, k, b, c);
  EXPECT_EQ(fast.data()[0], 7.0f);
  EXPECT_EQ(naive.data()[0], 7.0f);
}

TEST(Conv, MatchesQuadrupleLoopOnRandomInputs) {
  std::mt19937_64 rng(21);
  const std::vector<Convolution> configs{
      {3, 3, 2, 4, 1, 0, 1}, {3, 3, 2, 4, 1, 1, 1}, {5, 5, 2, 6, 2, 2, 2}, {2, 3, 2, 2, 3, 1, 2}, {1, 1, 2, 5, 1, 0, 1}};
  for (const auto& c : configs) {
    const Tensor in = random_tensor(rng, {8, 8, 2});
    const auto k = random_vec(rng, static_cast<std::size_t>(c.kernel_h * c.kernel_w * (c.in_channels / c.groups) * c.out_channels));
    const auto b = random_vec(rng, static_cast<std::size_t>(c.out_channels));
    Shape os;
    const auto ref = quad_loop_conv(in, k, b, c, os);
    const Tensor fast = conv2d(in, k, b, c), naive = conv2d_naive(in, k, b, c);
    ASSERT_EQ(fast.shape(), os);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(fast.data()[i], ref[i], 1e-5);
      EXPECT_NEAR(naive.data()[i], ref[i], 1e-5);
    }
  }
}

TEST(Conv, IdentityOneByOne) {
  std::mt19937_64 rng(22);
  const Tensor in = random_tensor(rng, {6, 5, 4});
  std::vector<float> k(16, 0.0f), b(4, 0.0f);
  for (int c = 0; c < 4; ++c) k[static_cast<std::size_t>(c * 4 + c)] = 1.0f;
  const Tensor out = conv2d(in, k, b, {1, 1, 4, 4, 1, 0, 1});
  ASSERT_EQ(out.shape(), in.shape());
  for (std::size_t i = 0; i < in.data().size(); ++i) EXPECT_EQ(out.data()[i], in.data()[i]);
}

TEST(Conv, BitIdenticalAcrossThreadCounts) {
  std::mt19937_64 rng(23);
  const Convolution c{5, 5, 6, 16, 1, 2, 2};
  const Tensor in = random_tensor(rng, {19, 17, 6});
  const auto k = random_vec(rng, 5 * 5 * 3 * 16), b = random_vec(rng, 16);
  const Tensor one = conv2d(in, k, b, c, 1);
  for (int t : {2, 3, 8}) {
    const Tensor many = conv2d(in, k, b, c, t);
    EXPECT_TRUE(std::equal(one.data().begin(), one.data().end(), many.data().begin()));
  }
}

TEST(Layers, ReluIsNonNegative) {
  std::mt19937_64 rng(24);
  Tensor t = random_tensor(rng, {4, 4, 3});
  const Tensor before = t;
  relu_inplace(t);
  for (std::size_t i = 0; i < t.data().size(); ++i) {
    EXPECT_GE(t.data()[i], 0.0f);
    EXPECT_EQ(t.data()[i], std::max(0.0f, before.data()[i]));
  }
}

TEST(Layers, MaxPoolBounds) {
  std::mt19937_64 rng(25);
  const Tensor in = random_tensor(rng, {13, 13, 3});
  const MaxPool p{3, 2};
  const Tensor out = max_pool(in, p);
  EXPECT_EQ(out.shape(), (Shape{6, 6, 3}));
  for (int c = 0; c < 3; ++c) {
    float in_max = -10.0f, out_max = -10.0f;
    for (int y = 0; y < 13; ++y)
      for (int x = 0; x < 13; ++x) in_max = std::max(in_max, in(y, x, c));
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        out_max = std::max(out_max, out(y, x, c));
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) EXPECT_GE(out(y, x, c), in(2 * y + i, 2 * x + j, c));
      }
    EXPECT_LE(out_max, in_max);
  }
}

TEST(Layers, LocalResponseNormMatchesFormula) {
  std::mt19937_64 rng(26);
  const Tensor in = random_tensor(rng, {2, 2, 7});
  const LocalResponseNorm p{};
  const Tensor out = local_response_norm(in, p);
  for (int c = 0; c < 7; ++c) {
    double ss = 0.0;
    for (int d = std::max(0, c - 2); d <= std::min(6, c + 2); ++d) ss += double(in(1, 0, d)) * in(1, 0, d);
    EXPECT_NEAR(out(1, 0, c), in(1, 0, c) / std::pow(2.0 + 1e-4 * ss, 0.75), 1e-6);
  }
}

TEST(Layers, SoftmaxSumsToOne) {
  const Tensor in(Shape{1, 1, 4}, std::vector<float>{1.0f, 2.0f, 3.0f, 1000.0f});
  const Tensor out = softmax(in);
  double s = 0.0;
  for (float v : out.data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-6);
  EXPECT_NEAR(out.data()[3], 1.0f, 1e-6);
}

TEST(Shapes, AlexNetCanonicalSizes) {
  const NetworkSpec s = alexnet_spec();
  const auto shapes = infer_shapes(s);
  auto at = [&](const std::string& name) {
    for (std::size_t i = 0; i < s.layers.size(); ++i)
      if (s.layers[i].name == name) return shapes[i];
    throw std::runtime_error("missing " + name);
  };
  EXPECT_EQ(at("conv1"), (Shape{55, 55, 96}));
  EXPECT_EQ(at("pool1"), (Shape{27, 27, 96}));
  EXPECT_EQ(at("conv2"), (Shape{27, 27, 256}));
  EXPECT_EQ(at("pool2"), (Shape{13, 13, 256}));
  EXPECT_EQ(at("conv3"), (Shape{13, 13, 384}));
  EXPECT_EQ(at("conv4"), (Shape{13, 13, 384}));
  EXPECT_EQ(at("conv5"), (Shape{13, 13, 256}));
  EXPECT_EQ(at("pool5"), (Shape{6, 6, 256}));
  EXPECT_EQ(at("fc6"), (Shape{1, 1, 4096}));
  EXPECT_EQ(at("relu7"), (Shape{1, 1, 4096}));
  EXPECT_EQ(at("fc8"), (Shape{1, 1, 1000}));
}

TEST(Shapes, MismatchNamesTheLayer) {
  NetworkSpec s;
  s.input = {8, 8, 3};
  s.layers = {{"c1", Convolution{3, 3, 3, 4, 1, 0, 1}}, {"bad_fc", FullyConnected{999, 2}}};
  try {
    infer_shapes(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad_fc"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
  s.layers = {{"grp", Convolution{3, 3, 3, 4, 1, 0, 2}}};
  EXPECT_THROW(infer_shapes(s), Error);
}

TEST(Shapes, SpecJsonRoundTrip) {
  const NetworkSpec s = alexnet_spec();
  const NetworkSpec back = spec_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_EQ(infer_shapes(back), infer_shapes(s));
}

NetworkSpec small_net() {
  NetworkSpec s;
  s.input = {12, 12, 3};
  s.layers = {{"conv1", Convolution{3, 3, 3, 4, 1, 1, 1}}, {"relu1", Relu{}},  {"pool1", MaxPool{2, 2}},
              {"conv2", Convolution{3, 3, 4, 6, 1, 0, 2}}, {"relu2", Relu{}},  {"fc3", FullyConnected{4 * 4 * 6, 5}},
              {"relu3", Relu{}}};
  return s;
}

TEST(Forward, SmallNetMatchesLayerByLayerOracle) {
  const NetworkSpec s = small_net();
  const WeightArchive w = random_weights(s, 31);
  validate(w, s);
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor in = random_tensor(rng, s.input);
    ForwardOptions opts;
    opts.tap = "relu3";
    const Tensor got = forward_tensor(s, w, in, opts);

    Shape sh;
    auto c1 = quad_loop_conv(in, w.layers.at("conv1").kernel, w.layers.at("conv1").bias,
                             std::get<Convolution>(s.layers[0].op), sh);
    Tensor t1(sh);
    for (std::size_t i = 0; i < c1.size(); ++i) t1.data()[i] = static_cast<float>(std::max(0.0, c1[i]));
    Tensor p1(Shape{6, 6, 4});
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 4; ++c)
          p1(y, x, c) = std::max({t1(2 * y, 2 * x, c), t1(2 * y + 1, 2 * x, c), t1(2 * y, 2 * x + 1, c), t1(2 * y + 1, 2 * x + 1, c)});
    auto c2 = quad_loop_conv(p1, w.layers.at("conv2").kernel, w.layers.at("conv2").bias,
                             std::get<Convolution>(s.layers[3].op), sh);
    ASSERT_EQ(sh, (Shape{4, 4, 6}));
    for (auto& v : c2) v = std::max(0.0, v);
    const auto& fc = w.layers.at("fc3");
    ASSERT_EQ(got.data().size(), 5u);
    for (int o = 0; o < 5; ++o) {
      double acc = fc.bias[o];
      for (std::size_t i = 0; i < c2.size(); ++i) acc += fc.kernel[o * c2.size() + i] * c2[i];
      EXPECT_NEAR(got.data()[o], std::max(0.0, acc), 1e-4);
    }
  }
}

TEST(Forward, ZeroWeightsZeroInputGiveZeroFeatures) {
  const NetworkSpec s = small_net();
  WeightArchive w = random_weights(s, 1);
  for (auto& [name, lw] : w.layers) {
    std::fill(lw.kernel.begin(), lw.kernel.end(), 0.0f);
    std::fill(lw.bias.begin(), lw.bias.end(), 0.0f);
  }
  ForwardOptions opts;
  opts.tap = "relu3";
  const Tensor out = forward_tensor(s, w, Tensor(s.input), opts);
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, AlexNetDeterministicAcrossThreads) {
  const NetworkSpec s = alexnet_spec();
  const WeightArchive w = random_weights(s, 7);
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  ChannelStack st{GrayImage(227, 227), GrayImage(227, 227), GrayImage(227, 227)};
  for (GrayImage* p : {&st.r, &st.g, &st.b})
    for (auto& v : p->pixels()) v = u(rng);
  ForwardOptions one;
  const std::vector<float> a = forward(s, w, st, one);
  ASSERT_EQ(a.size(), 4096u);
  ForwardOptions many = one;
  many.threads = 4;
  const std::vector<float> b = forward(s, w, st, many);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  EXPECT_EQ(forward(s, w, st, one), a);
  for (float v : a) EXPECT_GE(v, 0.0f);
}

TEST(Forward, UnknownTapIsAnError) {
  const NetworkSpec s = small_net();
  ForwardOptions opts;
  opts.tap = "fc99";
  EXPECT_THROW(forward_tensor(s, random_weights(s, 1), Tensor(s.input), opts), Error);
}

class ArchiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("renoscan_archive_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(ArchiveTest, RoundTripIsBitIdentical) {
  const NetworkSpec s = small_net();
  WeightArchive w = random_weights(s, 41);
  std::mt19937_64 rng(42);
  for (auto& [name, lw] : w.layers) lw.bias = random_vec(rng, lw.bias.size());
  save_weights(dir, w);
  const WeightArchive back = load_weights(dir);
  validate(back, s);
  ASSERT_EQ(back.layers.size(), w.layers.size());
  for (const auto& [name, lw] : w.layers) {
    const auto& b = back.layers.at(name);
    EXPECT_EQ(b.kernel_shape, lw.kernel_shape);
    EXPECT_EQ(std::memcmp(b.kernel.data(), lw.kernel.data(), lw.kernel.size() * 4), 0);
    EXPECT_EQ(std::memcmp(b.bias.data(), lw.bias.data(), lw.bias.size() * 4), 0);
  }
}

TEST_F(ArchiveTest, TruncatedByOneByte) {
  save_weights(dir, random_weights(small_net(), 43));
  auto bytes = io::read_bytes(dir / "weights.bin");
  bytes.pop_back();
  io::write_bytes_atomic(dir / "weights.bin", bytes);
  try {
    load_weights(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }
}

TEST_F(ArchiveTest, ExtraLayerIsNamed) {
  const NetworkSpec s = small_net();
  WeightArchive w = random_weights(s, 44);
  w.layers["ghost"] = w.layers.at("fc3");
  save_weights(dir, w);
  try {
    validate(load_weights(dir), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
}

TEST_F(ArchiveTest, ShapeMismatchIsNamed) {
  const NetworkSpec s = small_net();
  WeightArchive w = random_weights(s, 45);
  w.layers.at("conv2").kernel_shape = {3, 3, 4, 6};
  w.layers.at("conv2").kernel.resize(3 * 3 * 4 * 6);
  try {
    validate(w, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("conv2"), std::string::npos);
  }
}

TEST_F(ArchiveTest, NonFiniteWeightRejected) {
  WeightArchive w = random_weights(small_net(), 46);
  w.layers.at("conv1").kernel[3] = std::numeric_limits<float>::quiet_NaN();
  save_weights(dir, w);
  EXPECT_THROW(load_weights(dir), Error);
}

}  // namespace
}  // namespace renoscan::cnn
