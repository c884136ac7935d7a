#include <gtest/gtest.h>

#include <cmath>

#include "voi/nn.hpp"

using namespace voi;
using namespace voi::nn;

namespace {

using TD = Tensor<double>;
using VD = Var<double>;
using Vars = std::vector<VD>;

TD random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  TD t(std::move(s));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Values with |x| in [0.1, 1], away from relu/leaky/abs kinks.
TD away_from_zero(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  TD t(std::move(s));
  for (auto& v : t.data) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 1.0);
  return t;
}

constexpr double kTol = 1e-5;

}  // namespace

TEST(Tensor, ShapeAndData) {
  TD t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(TD({2, 0}), Error);
}

TEST(Conv2d, IdentityKernel) {
  Tape<double> tape;
  const TD x = random_tensor({2, 3, 5, 5}, 1);
  TD w({3, 3, 1, 1}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  const auto y = conv2d(tape.constant(x), tape.constant(w), std::nullopt, Conv2dOptions::valid());
  EXPECT_EQ(y.value().data, x.data);
}

TEST(Conv2d, OnesSumToNine) {
  Tape<double> tape;
  const auto y = conv2d(tape.constant(TD({1, 1, 4, 4}, 1.0)), tape.constant(TD({1, 1, 3, 3}, 1.0)), std::nullopt,
                        Conv2dOptions::valid());
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (auto v : y.value().data) EXPECT_EQ(v, 9.0);
}

TEST(Conv2d, StrideTwoSameHalves) {
  EXPECT_EQ(conv_out_dim(224, 3, 2, 1), 112u);
  Tape<float> tape;
  const auto y = conv2d(tape.constant(Tensor<float>({1, 1, 224, 224}, 1.0f)),
                        tape.constant(Tensor<float>({2, 1, 3, 3}, 1.0f)), std::nullopt, Conv2dOptions::same(3, 2));
  EXPECT_EQ(y.shape(), (Shape{1, 2, 112, 112}));
}

TEST(Conv2d, ShapeMismatchThrows) {
  Tape<double> tape;
  EXPECT_THROW(conv2d(tape.constant(TD({1, 2, 4, 4})), tape.constant(TD({1, 3, 3, 3})), std::nullopt,
                      Conv2dOptions::valid()),
               Error);
}

TEST(ConvTranspose, AdjointOfConv) {
  // <conv(x), y> == <x, conv_transpose(y)> with the same kernel
  Tape<double> tape;
  const TD x = random_tensor({1, 2, 6, 6}, 3), w = random_tensor({4, 2, 3, 3}, 4);
  const auto opt = Conv2dOptions{2, 1};
  const auto cx = conv2d(tape.constant(x), tape.constant(w), std::nullopt, opt);
  const TD y = random_tensor(cx.shape(), 5);
  // conv weight [Cout=4, Cin=2] doubles as transposed weight [Cin'=4, Cout'=2]
  const auto ty = conv_transpose2d(tape.constant(y), tape.constant(w), std::nullopt, opt, 1);
  ASSERT_EQ(ty.shape(), x.shape);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < y.size(); ++i) a += cx.value()[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) b += x[i] * ty.value()[i];
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(Softmax, Xent) {
  Tape<double> tape;
  const std::vector<int> l0{3};
  EXPECT_NEAR(softmax_xent(tape.constant(TD({1, 12}, 0.5)), std::span<const int>(l0)).value()[0], std::log(12.0),
              1e-12);
  TD big({1, 3}, 0.0);
  big[1] = 1000;
  const std::vector<int> l1{1};
  EXPECT_LT(softmax_xent(tape.constant(big), std::span<const int>(l1)).value()[0], 1e-6);
  TD two({1, 2});
  two[0] = 1;
  two[1] = 2;
  EXPECT_NEAR(softmax_xent(tape.constant(two), std::span<const int>(l1)).value()[0], std::log1p(std::exp(-1.0)),
              1e-12);
  const std::vector<int> bad{2};
  EXPECT_THROW(softmax_xent(tape.constant(two), std::span<const int>(bad)), Error);
}

TEST(Softmax, RowsSumToOne) {
  Tape<double> tape;
  const auto s = softmax(tape.constant(random_tensor({5, 7}, 9, -30, 30)));
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 7; ++c) sum += s.value()[r * 7 + c];
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  Tape<double> tape;
  TD rm({3}, 0.0), rv({3}, 1.0);
  const TD x = random_tensor({4, 3, 5, 5}, 21, -3, 7);
  const auto y = batch_norm(tape.constant(x), tape.constant(TD({3}, 1.0)), tape.constant(TD({3}, 0.0)), rm, rv,
                            BatchNormOptions{});
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    const double n = 4 * 25;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t p = 0; p < 25; ++p) m += y.value()[(i * 3 + c) * 25 + p] / n;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t p = 0; p < 25; ++p) v += std::pow(y.value()[(i * 3 + c) * 25 + p] - m, 2) / n;
    EXPECT_LT(std::abs(m), 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
  // running stats moved 1% of the way toward the batch statistics
  EXPECT_GT(rm[0], 0.0);
  EXPECT_LT(rm[0], 0.1);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  ParameterStore<double> s;
  s.add("p", TD({3}, 0.5));
  Gradients<double> g{TD({3}, 0.0)};
  adam_step(s, g, AdamConfig{}, 1);
  EXPECT_EQ(s.value("p").data, std::vector<double>(3, 0.5));
}

TEST(Adam, FirstStepIsLrTimesSign) {
  ParameterStore<double> s;
  s.add("p", TD({2}, 0.0));
  TD g({2});
  g[0] = 3.0;
  g[1] = -0.02;
  adam_step(s, Gradients<double>{g}, AdamConfig{}, 1);
  // bias-corrected first step: lr * g / (|g| + eps)
  EXPECT_NEAR(s.value("p")[0], -0.001 * 3.0 / (3.0 + 1e-7), 1e-15);
  EXPECT_NEAR(s.value("p")[1], 0.001 * 0.02 / (0.02 + 1e-7), 1e-15);
}

TEST(Adam, MatchesHandSimulation) {
  ParameterStore<double> s;
  s.add("p", TD({1}, 1.0));
  double p = 1.0, m = 0, v = 0;
  const double g = 0.7;
  for (long t = 1; t <= 5; ++t) {
    adam_step(s, Gradients<double>{TD({1}, g)}, AdamConfig{}, t);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    const double before = p;
    p -= 0.001 * mh / (std::sqrt(vh) + 1e-7);
    EXPECT_LT(p, before);
    EXPECT_NEAR(s.value("p")[0], p, 1e-14);
  }
  EXPECT_THROW(adam_step(s, Gradients<double>{TD({2}, g)}, AdamConfig{}, 6), Error);
  EXPECT_THROW(adam_step(s, Gradients<double>{TD({1}, g)}, AdamConfig{}, 0), Error);
}

TEST(Tape, SharedInputAccumulates) {
  // y = x*2 + x*3 -> dy/dx = 5 at every element, x used twice
  Tape<double> tape;
  const auto x = tape.leaf(TD({3}, 1.0));
  const auto y = add(scale(x, 2.0), scale(x, 3.0));
  tape.backward(mean(y));
  for (auto g : tape.grad(x).data) EXPECT_NEAR(g, 5.0 / 3.0, 1e-15);
}

TEST(Tape, ParamIsCachedPerTape) {
  ParameterStore<double> s;
  s.add("w", TD({2}, 1.0));
  Tape<double> tape;
  EXPECT_EQ(tape.param(s, "w").id, tape.param(s, "w").id);
  EXPECT_THROW(tape.param(s, "missing"), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  ParameterStore<float> s;
  Rng rng(4);
  add_conv(s, "c", 3, 4, 3, rng);
  add_norm(s, "n", 4, true);
  s.value("n.running_mean")[2] = 0.25f;
  const auto bytes = checkpoint_bytes(s, {{"classes", "a,b"}});
  EXPECT_EQ(bytes.rfind("#voi-ckpt v1\nmeta classes a,b\nparams 6\n", 0), 0u);
  const auto ck = parse_checkpoint<float>(bytes);
  EXPECT_EQ(ck.meta_value("classes"), "a,b");
  ASSERT_EQ(ck.store.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(ck.store.entry(i).name, s.entry(i).name);
    EXPECT_EQ(ck.store.entry(i).value.data, s.entry(i).value.data);
    EXPECT_EQ(ck.store.entry(i).trainable, s.entry(i).trainable);
  }
  EXPECT_EQ(checkpoint_bytes(ck.store, ck.meta), bytes);
  EXPECT_THROW(parse_checkpoint<float>("garbage\n"), ParseError);
  EXPECT_THROW(parse_checkpoint<float>(bytes.substr(0, bytes.size() - 7)), ParseError);
}

TEST(Checkpoint, LittleEndianLayout) {
  ParameterStore<float> s;
  s.add("x", Tensor<float>({1}, 1.0f));
  const auto b = checkpoint_bytes(s);
  // 1.0f = 0x3F800000 stored low byte first
  const std::string tail = b.substr(b.size() - 5);
  EXPECT_EQ(tail, std::string("\x00\x00\x80\x3f\n", 5));
}

// ---------------------------------------------------------------------------
// Finite-difference checks, 64-bit

class GradCheck : public ::testing::Test {
 protected:
  static void expect_ok(const GradCheckResult& r, std::size_t min_probes = 1) {
    EXPECT_LT(r.max_rel_error, kTol);
    EXPECT_GE(r.probes, min_probes);
  }
};

TEST_F(GradCheck, Elementwise) {
  const TD a = random_tensor({3, 4}, 1), b = random_tensor({3, 4}, 2);
  expect_ok(grad_check([](auto&, const Vars& v) { return add(v[0], v[1]); }, {a, b}, 1));
  expect_ok(grad_check([](auto&, const Vars& v) { return sub(v[0], v[1]); }, {a, b}, 2));
  expect_ok(grad_check([](auto&, const Vars& v) { return affine(v[0], 1.7, -0.3); }, {a}, 3));
  expect_ok(grad_check([](auto&, const Vars& v) { return tanh(v[0]); }, {a}, 4));
  expect_ok(grad_check([](auto&, const Vars& v) { return sigmoid(v[0]); }, {a}, 5));
  expect_ok(grad_check([](auto&, const Vars& v) { return mean(v[0]); }, {a}, 6));
  expect_ok(grad_check([](auto&, const Vars& v) { return mse_to(v[0], 0.5); }, {a}, 7));
}

TEST_F(GradCheck, ReluAwayFromZero) {
  const TD a = away_from_zero({4, 5}, 3);
  const auto r = grad_check([](auto&, const Vars& v) { return relu(v[0]); }, {a}, 8);
  expect_ok(r, 20);
  EXPECT_EQ(r.skipped, 0u);
  expect_ok(grad_check([](auto&, const Vars& v) { return leaky_relu(v[0]); }, {a}, 9), 20);
  const TD b = away_from_zero({4, 5}, 4);
  expect_ok(grad_check([](auto&, const Vars& v) { return l1_loss(v[0], v[1]); }, {a, b}, 10));
}

TEST_F(GradCheck, SoftmaxAndXent) {
  const TD a = random_tensor({3, 5}, 11, -2, 2);
  expect_ok(grad_check([](auto&, const Vars& v) { return softmax(v[0]); }, {a}, 11));
  const std::vector<int> labels{0, 4, 2};
  expect_ok(grad_check([&](auto&, const Vars& v) { return softmax_xent(v[0], std::span<const int>(labels)); },
                       {a}, 12));
}

TEST_F(GradCheck, Dense) {
  const TD x = random_tensor({4, 6}, 1), w = random_tensor({3, 6}, 2), b = random_tensor({3}, 3);
  expect_ok(grad_check([](auto&, const Vars& v) { return dense(v[0], v[1], v[2]); }, {x, w, b}, 13), 30);
}

TEST_F(GradCheck, Conv) {
  const TD x = random_tensor({2, 3, 7, 7}, 1), w = random_tensor({4, 3, 3, 3}, 2), b = random_tensor({4}, 3);
  for (auto opt : {Conv2dOptions::same(3), Conv2dOptions::same(3, 2), Conv2dOptions::valid(2)})
    expect_ok(grad_check([opt](auto&, const Vars& v) { return conv2d(v[0], v[1], v[2], opt); }, {x, w, b}, 14), 30);
  const TD wt = random_tensor({3, 2, 3, 3}, 5), bt = random_tensor({2}, 6);
  expect_ok(grad_check([](auto&, const Vars& v) { return conv_transpose2d(v[0], v[1], v[2], {2, 1}, 1); },
                       {x, wt, bt}, 15),
            30);
}

TEST_F(GradCheck, Normalization) {
  const TD x = random_tensor({3, 2, 4, 4}, 1, -2, 3), g = random_tensor({2}, 2, 0.5, 1.5), b = random_tensor({2}, 3);
  expect_ok(grad_check(
      [](auto&, const Vars& v) {
        TD rm({2}, 0.0), rv({2}, 1.0);
        return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormOptions{});
      },
      {x, g, b}, 16));
  expect_ok(grad_check(
      [](auto&, const Vars& v) {
        TD rm({2}, 0.3), rv({2}, 1.7);
        return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormOptions{0.99, 1e-5, false});
      },
      {x, g, b}, 17));
  expect_ok(grad_check([](auto&, const Vars& v) { return instance_norm(v[0], v[1], v[2]); }, {x, g, b}, 18));
  const TD x2 = random_tensor({5, 3}, 4);
  expect_ok(grad_check(
      [](auto&, const Vars& v) {
        TD rm({3}, 0.0), rv({3}, 1.0);
        return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormOptions{});
      },
      {x2, random_tensor({3}, 5), random_tensor({3}, 6)}, 19));
}

TEST_F(GradCheck, PoolingAndResampling) {
  const TD x = random_tensor({2, 3, 6, 6}, 1);
  expect_ok(grad_check([](auto&, const Vars& v) { return max_pool2d(v[0], 2, 2); }, {x}, 20), 30);
  expect_ok(grad_check([](auto&, const Vars& v) { return max_pool2d(v[0], 3, 2, 1); }, {x}, 21), 30);
  expect_ok(grad_check([](auto&, const Vars& v) { return global_avg_pool(v[0]); }, {x}, 22));
  expect_ok(grad_check([](auto&, const Vars& v) { return upsample_nearest(v[0], 2); }, {x}, 23));
  expect_ok(grad_check([](auto&, const Vars& v) { return flatten(v[0]); }, {x}, 24));
}

TEST_F(GradCheck, ResidualJoin) {
  const TD x = random_tensor({1, 2, 5, 5}, 1), w = random_tensor({2, 2, 3, 3}, 2);
  expect_ok(grad_check(
      [](auto&, const Vars& v) { return add(v[0], tanh(conv2d(v[0], v[1], std::nullopt, Conv2dOptions::same(3)))); },
      {x, w}, 25));
}
