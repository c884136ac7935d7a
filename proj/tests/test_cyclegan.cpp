#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "voi/cyclegan.hpp"
#include "voi/nn/gradcheck.hpp"

using namespace voi;
using namespace voi::gan;

namespace {

CycleGanConfig tiny() { return {16, 2, 1}; }

nn::Tensor<double> random_batch(nn::Shape s, std::uint64_t seed) {
  nn::Tensor<double> t(s);
  Rng rng(seed);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  return t;
}

std::vector<Image> random_images(int n, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> out(std::size_t(n), Image(side, side));
  for (auto& im : out)
    for (auto& v : im.rgb) v = std::uint8_t(rng.index(256));
  return out;
}

}  // namespace

TEST(CycleGan, ShapesAndRange) {
  auto m = build_cyclegan({16, 4, 2}, 1);
  nn::Tape<float> tape;
  nn::Tensor<float> x({2, 3, 16, 16});
  Rng rng(1);
  for (auto& v : x.data) v = float(rng.uniform(-1, 1));
  const auto y = generator(m.G, m.config, tape.constant(x));
  ASSERT_EQ(y.shape(), x.shape);
  for (float v : y.value().data) {
    EXPECT_GE(v, -1.f);
    EXPECT_LE(v, 1.f);
  }
  const auto d = discriminator(m.D_tgt, y);
  EXPECT_EQ(d.shape(), (nn::Shape{2, 1, patch_side(16), patch_side(16)}));
  EXPECT_EQ(patch_side(16), 2u);
  EXPECT_THROW(build_cyclegan({18, 4, 2}, 1), Error);
  EXPECT_THROW(build_cyclegan({12, 4, 2}, 1), Error);
}

TEST(CycleGan, EveryParameterReceivesGradient) {
  auto m = build_cyclegan(tiny(), 2);
  nn::Tape<float> tape;
  nn::Tensor<float> x({1, 3, 16, 16}), y({1, 3, 16, 16});
  Rng rng(3);
  for (auto& v : x.data) v = float(rng.uniform(-1, 1));
  for (auto& v : y.data) v = float(rng.uniform(-1, 1));
  Net<float> G = [&](nn::Var<float> v) { return generator(m.G, m.config, v); };
  Net<float> F = [&](nn::Var<float> v) { return generator(m.F, m.config, v); };
  Net<float> Ds = [&](nn::Var<float> v) { return discriminator(m.D_src, v); };
  Net<float> Dt = [&](nn::Var<float> v) { return discriminator(m.D_tgt, v); };
  auto o = generator_objective(G, F, Ds, Dt, tape.constant(x), tape.constant(y), 10.0);
  auto total = nn::add(o.total, nn::add(discriminator_loss(Ds, tape.constant(x), o.fake_src),
                                        discriminator_loss(Dt, tape.constant(y), o.fake_tgt)));
  tape.backward(total);
  for (auto* store : {&m.G, &m.F, &m.D_src, &m.D_tgt}) {
    const auto g = tape.gradients(*store);
    for (std::size_t i = 0; i < store->size(); ++i) {
      ASSERT_FALSE(g[i].empty()) << store->entry(i).name;
      double s = 0;
      for (float v : g[i].data) s += std::abs(v);
      EXPECT_GT(s, 0) << store->entry(i).name;
    }
  }
}

TEST(CycleGan, LossesWithIdentityGeneratorsAndConstantDiscriminators) {
  nn::Tape<double> tape;
  const auto xs = random_batch({2, 3, 4, 4}, 1), ys = random_batch({2, 3, 4, 4}, 2);
  Net<double> id = [](nn::Var<double> v) { return v; };
  Net<double> half = [](nn::Var<double> v) { return nn::affine(v, 0.0, 0.5); };
  const auto t = loss_terms(id, id, half, half, tape.constant(xs), tape.constant(ys), 10.0);
  EXPECT_DOUBLE_EQ(t.cyc, 0.0);
  EXPECT_DOUBLE_EQ(t.adv_G, 0.25);
  EXPECT_DOUBLE_EQ(t.adv_F, 0.25);
  EXPECT_DOUBLE_EQ(t.adv_D_src, 0.25);  // 0.5 * (0.25 + 0.25)
  EXPECT_DOUBLE_EQ(t.adv_D_tgt, 0.25);

  // negation as generator: F(G(x)) = x again, G(x) = -x
  Net<double> neg = [](nn::Var<double> v) { return nn::scale(v, -1.0); };
  const auto u = loss_terms(neg, neg, half, half, tape.constant(xs), tape.constant(ys), 10.0);
  EXPECT_DOUBLE_EQ(u.cyc, 0.0);
  Net<double> shift = [](nn::Var<double> v) { return nn::affine(v, 1.0, 0.1); };
  const auto w = loss_terms(shift, shift, half, half, tape.constant(xs), tape.constant(ys), 10.0);
  EXPECT_NEAR(w.cyc, 0.4, 1e-12);  // two terms, each |x + 0.2 - x|

  const auto o = generator_objective(shift, shift, half, half, tape.constant(xs), tape.constant(ys), 10.0);
  EXPECT_NEAR(o.total.value()[0], 0.25 + 0.25 + 10 * 0.4, 1e-12);
  EXPECT_THROW(generator_objective(id, id, half, half, tape.constant(xs), tape.constant(random_batch({1, 3, 4, 4}, 3)), 1.0),
               Error);
}

TEST(CycleGan, GeneratorGradientsMatchFiniteDifferences) {
  CycleGanConfig c{8, 2, 1};
  nn::ParameterStore<double> g;
  Rng rng(4);
  gan::detail::add_generator(g, c, rng);
  const auto x = random_batch({1, 3, 8, 8}, 5);
  const auto r = nn::grad_check_params(
      g, [&](nn::Tape<double>& t) { return generator(g, c, t.constant(x)); }, 7, {1e-6, 6});
  EXPECT_LT(r.max_rel_error, 1e-4);
  nn::ParameterStore<double> d;
  gan::detail::add_discriminator(d, CycleGanConfig{16, 2, 0}, rng);
  const auto xd = random_batch({1, 3, 16, 16}, 6);
  const auto rd = nn::grad_check_params(d, [&](nn::Tape<double>& t) { return discriminator(d, t.constant(xd)); }, 8,
                                        {1e-6, 6});
  EXPECT_LT(rd.max_rel_error, 1e-4);
}

TEST(HistoryPool, FillsThenMixes) {
  HistoryPool pool(3);
  Rng rng(1);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(pool.query({float(i)}, rng), std::vector<float>{float(i)});
  int from_pool = 0;
  for (int i = 3; i < 203; ++i) from_pool += pool.query({float(i)}, rng)[0] != float(i);
  EXPECT_GT(from_pool, 70);
  EXPECT_LT(from_pool, 130);
  EXPECT_EQ(pool.contents().size(), 3u);

  HistoryPool pass(1);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(pass.query({float(i)}, rng), std::vector<float>{float(i)});
  EXPECT_TRUE(pass.contents().empty());
}

TEST(CycleGan, TrainLogsAndTranslates) {
  const auto src = random_images(4, 16, 1), tgt = random_images(3, 16, 2);
  GanTrainConfig cfg;
  cfg.epochs = 2;
  int calls = 0;
  auto res = train_cyclegan(src, tgt, tiny(), cfg, 5, [&](const GanEpochLog&) { ++calls; });
  EXPECT_EQ(calls, 2);
  ASSERT_EQ(res.log.size(), 2u);
  for (const auto& e : res.log) {
    EXPECT_TRUE(std::isfinite(e.mean.adv_G));
    EXPECT_TRUE(std::isfinite(e.mean.cyc));
  }
  EXPECT_EQ(split(gan_log_line(res.log[0]), ',').size(), split(gan_log_header(), ',').size());
  const auto out = translate(res.model, src, Direction::src_to_tgt);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].width, 16);
  EXPECT_GE(mean_cycle_error(res.model, src), 0.0);

  auto again = train_cyclegan(src, tgt, tiny(), cfg, 5);
  EXPECT_EQ(translate(again.model, src, Direction::src_to_tgt), out);

  EXPECT_THROW(train_cyclegan({}, tgt, tiny(), cfg, 5), Error);
  EXPECT_THROW(train_cyclegan(random_images(2, 12, 3), tgt, tiny(), cfg, 5), Error);
  EXPECT_THROW(translate(res.model, random_images(1, 12, 3), Direction::tgt_to_src), Error);
}

TEST(CycleGan, CycleLossFallsWithTraining) {
  // smooth images so a small generator can reconstruct them
  std::vector<Image> src, tgt;
  for (int i = 0; i < 6; ++i) {
    src.emplace_back(16, 16, Rgb{0.2 + 0.1 * i, 0.5, 0.3});
    tgt.emplace_back(16, 16, Rgb{0.3, 0.2 + 0.1 * i, 0.6});
  }
  GanTrainConfig cfg;
  cfg.epochs = 15;
  cfg.adam.lr = 2e-3;
  auto res = train_cyclegan(src, tgt, {16, 4, 1}, cfg, 3);
  EXPECT_LT(res.log.back().mean.cyc, res.log.front().mean.cyc);
}

TEST(CycleGan, CheckpointRoundTrip) {
  auto m = build_cyclegan(tiny(), 9);
  const auto dir = std::filesystem::temp_directory_path() / "voi_test_gan_ckpt";
  std::filesystem::create_directories(dir);
  save_cyclegan(dir / "gan.ckpt", m, {{"seed", "9"}});
  auto back = load_cyclegan(dir / "gan.ckpt");
  EXPECT_EQ(back.config.image_side, 16);
  EXPECT_EQ(nn::checkpoint_bytes(back.G), nn::checkpoint_bytes(m.G));
  EXPECT_EQ(nn::checkpoint_bytes(back.D_tgt), nn::checkpoint_bytes(m.D_tgt));
  const auto imgs = random_images(2, 16, 4);
  EXPECT_EQ(translate(back, imgs, Direction::tgt_to_src), translate(m, imgs, Direction::tgt_to_src));
}

TEST(CycleGan, CheckpointKeepsGeneratorNorm) {
  CycleGanConfig c = tiny();
  c.generator_norm = false;
  auto m = build_cyclegan(c, 5);
  const auto dir = std::filesystem::temp_directory_path() / "voi_test_gan_ckpt_plain";
  std::filesystem::create_directories(dir);
  save_cyclegan(dir / "gan.ckpt", m);
  auto back = load_cyclegan(dir / "gan.ckpt");
  EXPECT_FALSE(back.config.generator_norm);
  const auto imgs = random_images(2, 16, 6);
  EXPECT_EQ(translate(back, imgs, Direction::src_to_tgt), translate(m, imgs, Direction::src_to_tgt));
}

TEST(CycleGan, PlainGeneratorGradientsMatchFiniteDifferences) {
  CycleGanConfig c{8, 2, 1, false};
  nn::ParameterStore<double> g;
  Rng rng(4);
  gan::detail::add_generator(g, c, rng);
  const auto x = random_batch({1, 3, 8, 8}, 5);
  const auto r = nn::grad_check_params(
      g, [&](nn::Tape<double>& t) { return generator(g, c, t.constant(x)); }, 7, {1e-6, 6});
  EXPECT_LT(r.max_rel_error, 1e-4);
}
