#pragma once

#include <deque>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "voi/image.hpp"
#include "voi/nn.hpp"
#include "voi/tensor_image.hpp"

namespace voi::gan {

// Images live in [-1, 1] inside the networks; translate() maps outputs back to [0, 1].

struct CycleGanConfig {
  int image_side = 64;
  int width = 16;          // first generator / discriminator layer width
  int residual_blocks = 6;
  bool generator_norm = true;  // instance norm in the generators
};

inline void validate(const CycleGanConfig& c) {
  if (c.image_side < 16 || c.image_side % 4 != 0)
    throw Error("image side " + std::to_string(c.image_side) + " must be a multiple of 4 and at least 16");
  if (c.width <= 0 || c.residual_blocks < 0) throw Error("generator width must be positive");
}

struct GanTrainConfig {
  int epochs = 50;
  double lambda_cyc = 10;
  std::size_t pool_size = 50;
  nn::AdamConfig adam{2e-4, 0.5, 0.999, 1e-7};
  int batch_size = 1;
};

inline void validate(const GanTrainConfig& c) {
  if (c.epochs < 1) throw Error("GAN epochs must be >= 1");
  if (c.lambda_cyc < 0) throw Error("cycle weight must be non-negative");
  if (c.batch_size < 1) throw Error("GAN batch size must be >= 1");
  nn::validate(c.adam);
}

/// G: source -> target, F: target -> source, D_src / D_tgt judge each domain.
/// Each network owns a parameter store.
struct CycleGanModel {
  CycleGanConfig config;
  nn::ParameterStore<float> G, F, D_src, D_tgt;
};

namespace detail {

template <typename T>
void add_generator(nn::ParameterStore<T>& s, const CycleGanConfig& c, Rng& rng) {
  const std::size_t w = std::size_t(c.width);
  const bool norm = c.generator_norm;
  // convs followed by instance norm carry no bias: the normalization would cancel it
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    nn::add_conv(s, name, in, out, k, rng, !norm);
    if (norm) nn::add_norm(s, name + ".norm", out, false);
  };
  conv("in", 3, w, 7);
  conv("down1", w, 2 * w, 3);
  conv("down2", 2 * w, 4 * w, 3);
  for (int r = 0; r < c.residual_blocks; ++r) {
    const auto n = "res" + std::to_string(r);
    nn::add_conv(s, n + ".conv1", 4 * w, 4 * w, 3, rng, !norm);
    if (norm) nn::add_norm(s, n + ".norm1", 4 * w, false);
    nn::add_conv(s, n + ".conv2", 4 * w, 4 * w, 3, rng, !norm);
    if (norm) nn::add_norm(s, n + ".norm2", 4 * w, false);
  }
  conv("up1", 4 * w, 2 * w, 3);
  conv("up2", 2 * w, w, 3);
  nn::add_conv(s, "out", w, 3, 7, rng, true);
}

template <typename T>
void add_discriminator(nn::ParameterStore<T>& s, const CycleGanConfig& c, Rng& rng) {
  const std::size_t w = std::size_t(c.width);
  nn::add_conv(s, "c1", 3, w, 4, rng, true);
  nn::add_conv(s, "c2", w, 2 * w, 4, rng, false);
  nn::add_norm(s, "c2.norm", 2 * w, false);
  nn::add_conv(s, "c3", 2 * w, 4 * w, 4, rng, false);
  nn::add_norm(s, "c3.norm", 4 * w, false);
  nn::add_conv(s, "out", 4 * w, 1, 4, rng, true);
}

}  // namespace detail

/// Conv encoder (two stride-2 convs), residual blocks, two upsample+conv decoder steps and a
/// tanh output; instance norm throughout.
template <typename T>
nn::Var<T> generator(nn::ParameterStore<T>& s, const CycleGanConfig& c, nn::Var<T> x, bool track = true) {
  using namespace nn;
  auto norm = [&](Var<T> h, const std::string& name) {
    return c.generator_norm ? instance_norm_layer(h, s, name, track) : h;
  };
  auto block = [&](Var<T> h, const std::string& name, Conv2dOptions opt) {
    return relu(norm(conv_layer(h, s, name, opt, track), name + ".norm"));
  };
  Var<T> h = block(x, "in", Conv2dOptions::same(7));
  h = block(h, "down1", Conv2dOptions::same(3, 2));
  h = block(h, "down2", Conv2dOptions::same(3, 2));
  for (int r = 0; r < c.residual_blocks; ++r) {
    const auto n = "res" + std::to_string(r);
    Var<T> y = relu(norm(conv_layer(h, s, n + ".conv1", Conv2dOptions::same(3), track), n + ".norm1"));
    y = norm(conv_layer(y, s, n + ".conv2", Conv2dOptions::same(3), track), n + ".norm2");
    h = add(h, y);
  }
  h = block(upsample_nearest(h, 2), "up1", Conv2dOptions::same(3));
  h = block(upsample_nearest(h, 2), "up2", Conv2dOptions::same(3));
  return tanh(conv_layer(h, s, "out", Conv2dOptions::same(7), track));
}

/// PatchGAN: two stride-2 4x4 convs, one stride-1 conv, then a 1-channel patch map.
template <typename T>
nn::Var<T> discriminator(nn::ParameterStore<T>& s, nn::Var<T> x, bool track = true) {
  using namespace nn;
  Var<T> h = leaky_relu(conv_layer(x, s, "c1", Conv2dOptions{2, 1}, track));
  h = leaky_relu(instance_norm_layer(conv_layer(h, s, "c2", Conv2dOptions{2, 1}, track), s, "c2.norm", track));
  h = leaky_relu(instance_norm_layer(conv_layer(h, s, "c3", Conv2dOptions{1, 1}, track), s, "c3.norm", track));
  return conv_layer(h, s, "out", Conv2dOptions{1, 1}, track);
}

/// Patch map side for a given input side.
inline std::size_t patch_side(std::size_t side) {
  std::size_t h = nn::conv_out_dim(side, 4, 2, 1);
  h = nn::conv_out_dim(h, 4, 2, 1);
  h = nn::conv_out_dim(h, 4, 1, 1);
  return nn::conv_out_dim(h, 4, 1, 1);
}

inline CycleGanModel build_cyclegan(const CycleGanConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  CycleGanModel m;
  m.config = cfg;
  Rng rg = Rng::split(seed, 1), rf = Rng::split(seed, 2), rs = Rng::split(seed, 3), rt = Rng::split(seed, 4);
  detail::add_generator(m.G, cfg, rg);
  detail::add_generator(m.F, cfg, rf);
  detail::add_discriminator(m.D_src, cfg, rs);
  detail::add_discriminator(m.D_tgt, cfg, rt);
  return m;
}

// ---------------------------------------------------------------------------
// Losses

struct LossTerms {
  double adv_G = 0, adv_F = 0, adv_D_src = 0, adv_D_tgt = 0, cyc = 0;
};

template <typename T>
using Net = std::function<nn::Var<T>(nn::Var<T>)>;

template <typename T>
struct GeneratorObjective {
  nn::Var<T> total, adv_G, adv_F, cyc;
  nn::Var<T> fake_tgt, fake_src;  // G(x), F(y)
};

/// adv_G = mse(D_tgt(G(x)), 1), adv_F = mse(D_src(F(y)), 1),
/// cyc = mean|F(G(x)) - x| + mean|G(F(y)) - y|, total = adv_G + adv_F + lambda * cyc.
template <typename T>
GeneratorObjective<T> generator_objective(const Net<T>& G, const Net<T>& F, const Net<T>& D_src,
                                          const Net<T>& D_tgt, nn::Var<T> x, nn::Var<T> y, double lambda) {
  using namespace nn;
  if (x.shape() != y.shape()) throw Error("source and target batches differ in shape");
  GeneratorObjective<T> o;
  o.fake_tgt = G(x);
  o.fake_src = F(y);
  o.adv_G = mse_to(D_tgt(o.fake_tgt), T(1));
  o.adv_F = mse_to(D_src(o.fake_src), T(1));
  o.cyc = add(l1_loss(F(o.fake_tgt), x), l1_loss(G(o.fake_src), y));
  o.total = add(add(o.adv_G, o.adv_F), scale(o.cyc, T(lambda)));
  return o;
}

/// 0.5 * (mse(D(real), 1) + mse(D(fake), 0))
template <typename T>
nn::Var<T> discriminator_loss(const Net<T>& D, nn::Var<T> real, nn::Var<T> fake) {
  return nn::scale(nn::add(nn::mse_to(D(real), T(1)), nn::mse_to(D(fake), T(0))), T(0.5));
}

template <typename T>
LossTerms loss_terms(const Net<T>& G, const Net<T>& F, const Net<T>& D_src, const Net<T>& D_tgt, nn::Var<T> x,
                     nn::Var<T> y, double lambda) {
  const auto o = generator_objective(G, F, D_src, D_tgt, x, y, lambda);
  LossTerms t;
  t.adv_G = o.adv_G.value()[0];
  t.adv_F = o.adv_F.value()[0];
  t.cyc = o.cyc.value()[0];
  t.adv_D_tgt = discriminator_loss(D_tgt, y, o.fake_tgt).value()[0];
  t.adv_D_src = discriminator_loss(D_src, x, o.fake_src).value()[0];
  return t;
}

/// Loss terms of a model on one source batch and one target batch (values in [-1, 1]).
inline LossTerms cyclegan_losses(CycleGanModel& m, const nn::Tensor<float>& src, const nn::Tensor<float>& tgt,
                                 double lambda) {
  nn::Tape<float> tape;
  const auto& c = m.config;
  Net<float> G = [&](nn::Var<float> v) { return generator(m.G, c, v, false); };
  Net<float> F = [&](nn::Var<float> v) { return generator(m.F, c, v, false); };
  Net<float> Ds = [&](nn::Var<float> v) { return discriminator(m.D_src, v, false); };
  Net<float> Dt = [&](nn::Var<float> v) { return discriminator(m.D_tgt, v, false); };
  return loss_terms(G, F, Ds, Dt, tape.constant(src), tape.constant(tgt), lambda);
}

// ---------------------------------------------------------------------------
// History pool

/// Buffer of past generated images for discriminator updates. Until full, every query is
/// stored and returned; afterwards, with probability 1/2 a random stored image is returned
/// and replaced by the query. Sizes 0 and 1 pass queries straight through.
class HistoryPool {
 public:
  explicit HistoryPool(std::size_t size) : size_(size) {}

  std::vector<float> query(const std::vector<float>& image, Rng& rng) {
    if (size_ <= 1) return image;
    if (images_.size() < size_) {
      images_.push_back(image);
      return image;
    }
    if (rng.uniform() < 0.5) {
      const std::size_t i = rng.index(images_.size());
      std::vector<float> old = std::move(images_[i]);
      images_[i] = image;
      return old;
    }
    return image;
  }

  const std::vector<std::vector<float>>& contents() const { return images_; }

 private:
  std::size_t size_;
  std::vector<std::vector<float>> images_;
};

// ---------------------------------------------------------------------------
// Training

struct GanEpochLog {
  int epoch = 0;
  LossTerms mean;
};

inline std::string gan_log_header() { return "epoch,adv_G,adv_F,adv_Dsrc,adv_Dtgt,cyc"; }

inline std::string gan_log_line(const GanEpochLog& e) {
  return std::to_string(e.epoch) + "," + fmt_real(e.mean.adv_G) + "," + fmt_real(e.mean.adv_F) + "," +
         fmt_real(e.mean.adv_D_src) + "," + fmt_real(e.mean.adv_D_tgt) + "," + fmt_real(e.mean.cyc);
}

struct GanTrainResult {
  CycleGanModel model;
  std::vector<GanEpochLog> log;
};

using GanEpochCallback = std::function<void(const GanEpochLog&)>;

/// Alternating updates: generators (G and F jointly), then D_tgt and D_src on pooled fakes.
/// Each epoch visits every source image once, paired with a shuffled target image.
inline GanTrainResult train_cyclegan(const std::vector<Image>& src, const std::vector<Image>& tgt,
                                     const CycleGanConfig& mcfg, const GanTrainConfig& cfg, std::uint64_t seed,
                                     const GanEpochCallback& on_epoch = {}) {
  validate(cfg);
  if (src.empty()) throw Error("source domain dataset is empty");
  if (tgt.empty()) throw Error("target domain dataset is empty");
  const auto side = std::size_t(mcfg.image_side);
  for (const auto* set : {&src, &tgt})
    for (const auto& im : *set)
      if (std::size_t(im.width) != side || std::size_t(im.height) != side)
        throw Error("domain image is " + std::to_string(im.width) + "x" + std::to_string(im.height) +
                    ", model expects " + std::to_string(side) + "x" + std::to_string(side));
  GanTrainResult res{build_cyclegan(mcfg, seed), {}};
  auto& m = res.model;
  const std::size_t plane = 3 * side * side;
  auto planar = [&](const std::vector<Image>& imgs) {
    std::vector<std::vector<float>> out(imgs.size(), std::vector<float>(plane));
    for (std::size_t i = 0; i < imgs.size(); ++i) image_to_chw(imgs[i], out[i].data(), true);
    return out;
  };
  const auto xs = planar(src), ys = planar(tgt);
  HistoryPool pool_src(cfg.pool_size), pool_tgt(cfg.pool_size);
  Rng pool_rng = Rng::split(seed, 0x9001);
  long step = 0;
  const std::size_t bs = std::size_t(cfg.batch_size);
  auto batch_of = [&](const std::vector<std::vector<float>>& data, const std::vector<std::size_t>& order,
                      std::size_t start, std::size_t n) {
    nn::Tensor<float> t({n, 3, side, side});
    for (std::size_t i = 0; i < n; ++i) std::copy(data[order[start + i]].begin(), data[order[start + i]].end(), t.ptr() + i * plane);
    return t;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = Rng::split(seed, 0x7000 + std::uint64_t(epoch));
    std::vector<std::size_t> xo(xs.size()), yo(xs.size());
    std::iota(xo.begin(), xo.end(), 0);
    rng.shuffle(xo.begin(), xo.end());
    for (auto& v : yo) v = rng.index(ys.size());
    LossTerms sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < xo.size(); start += bs) {
      const std::size_t n = std::min(bs, xo.size() - start);
      const auto xb = batch_of(xs, xo, start, n), yb = batch_of(ys, yo, start, n);
      ++step;
      LossTerms t;
      nn::Tensor<float> fake_tgt, fake_src;
      {
        // generator update: discriminators frozen
        nn::Tape<float> tape;
        Net<float> G = [&](nn::Var<float> v) { return generator(m.G, mcfg, v); };
        Net<float> F = [&](nn::Var<float> v) { return generator(m.F, mcfg, v); };
        Net<float> Ds = [&](nn::Var<float> v) { return discriminator(m.D_src, v, false); };
        Net<float> Dt = [&](nn::Var<float> v) { return discriminator(m.D_tgt, v, false); };
        auto o = generator_objective(G, F, Ds, Dt, tape.constant(xb), tape.constant(yb), cfg.lambda_cyc);
        tape.backward(o.total);
        nn::adam_step(m.G, tape.gradients(m.G), cfg.adam, step);
        nn::adam_step(m.F, tape.gradients(m.F), cfg.adam, step);
        t.adv_G = o.adv_G.value()[0];
        t.adv_F = o.adv_F.value()[0];
        t.cyc = o.cyc.value()[0];
        fake_tgt = o.fake_tgt.value();
        fake_src = o.fake_src.value();
      }
      auto pooled = [&](HistoryPool& pool, const nn::Tensor<float>& fakes) {
        nn::Tensor<float> out(fakes.shape);
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<float> img(fakes.ptr() + i * plane, fakes.ptr() + (i + 1) * plane);
          const auto q = pool.query(img, pool_rng);
          std::copy(q.begin(), q.end(), out.ptr() + i * plane);
        }
        return out;
      };
      const auto pt = pooled(pool_tgt, fake_tgt), ps = pooled(pool_src, fake_src);
      {
        nn::Tape<float> tape;
        Net<float> Dt = [&](nn::Var<float> v) { return discriminator(m.D_tgt, v); };
        auto l = discriminator_loss(Dt, tape.constant(yb), tape.constant(pt));
        tape.backward(l);
        nn::adam_step(m.D_tgt, tape.gradients(m.D_tgt), cfg.adam, step);
        t.adv_D_tgt = l.value()[0];
      }
      {
        nn::Tape<float> tape;
        Net<float> Ds = [&](nn::Var<float> v) { return discriminator(m.D_src, v); };
        auto l = discriminator_loss(Ds, tape.constant(xb), tape.constant(ps));
        tape.backward(l);
        nn::adam_step(m.D_src, tape.gradients(m.D_src), cfg.adam, step);
        t.adv_D_src = l.value()[0];
      }
      sum.adv_G += t.adv_G;
      sum.adv_F += t.adv_F;
      sum.adv_D_src += t.adv_D_src;
      sum.adv_D_tgt += t.adv_D_tgt;
      sum.cyc += t.cyc;
      ++batches;
    }
    const double k = 1.0 / double(batches);
    GanEpochLog e{epoch, {sum.adv_G * k, sum.adv_F * k, sum.adv_D_src * k, sum.adv_D_tgt * k, sum.cyc * k}};
    res.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Inference

enum class Direction { src_to_tgt, tgt_to_src };

inline std::vector<Image> translate(CycleGanModel& m, const std::vector<Image>& images, Direction dir,
                                    std::size_t batch = 16) {
  std::vector<Image> out;
  auto& store = dir == Direction::src_to_tgt ? m.G : m.F;
  for (std::size_t start = 0; start < images.size(); start += batch) {
    const std::size_t n = std::min(batch, images.size() - start);
    std::vector<Image> chunk(images.begin() + long(start), images.begin() + long(start + n));
    for (const auto& im : chunk)
      if (im.width != m.config.image_side || im.height != m.config.image_side)
        throw Error("image is " + std::to_string(im.width) + "x" + std::to_string(im.height) + ", model expects " +
                    std::to_string(m.config.image_side) + "x" + std::to_string(m.config.image_side));
    nn::Tape<float> tape;
    const auto y = generator(store, m.config, tape.constant(images_to_tensor<float>(chunk, true)), false);
    for (auto& im : tensor_to_images(y.value(), true)) out.push_back(std::move(im));
  }
  return out;
}

/// Mean absolute cycle reconstruction error in [0, 1] units, per image: |F(G(x)) - x|.
inline std::vector<double> cycle_errors(CycleGanModel& m, const std::vector<Image>& src) {
  std::vector<double> out;
  const std::size_t plane = 3 * std::size_t(m.config.image_side) * std::size_t(m.config.image_side);
  for (const auto& im : src) {
    nn::Tape<float> tape;
    const auto x = tape.constant(images_to_tensor<float>({im}, true));
    const auto r = generator(m.F, m.config, generator(m.G, m.config, x, false), false);
    double s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += std::abs(double(r.value()[i]) - double(x.value()[i]));
    out.push_back(0.5 * s / double(plane));
  }
  return out;
}

inline double mean_cycle_error(CycleGanModel& m, const std::vector<Image>& src) {
  const auto e = cycle_errors(m, src);
  if (e.empty()) throw Error("no images");
  double s = 0;
  for (double v : e) s += v;
  return s / double(e.size());
}

// ---------------------------------------------------------------------------
// Checkpoint: the four stores in one file, names prefixed by network

inline void save_cyclegan(const std::filesystem::path& path, const CycleGanModel& m, const nn::Meta& extra = {}) {
  nn::ParameterStore<float> all;
  for (const auto& [prefix, store] : {std::pair<const char*, const nn::ParameterStore<float>*>{"G.", &m.G},
                                      {"F.", &m.F}, {"Dsrc.", &m.D_src}, {"Dtgt.", &m.D_tgt}})
    for (const auto& e : store->entries()) all.add(prefix + e.name, e.value, e.trainable);
  nn::Meta meta{{"kind", "voi-cyclegan"},
                {"image_side", std::to_string(m.config.image_side)},
                {"width", std::to_string(m.config.width)},
                {"residual_blocks", std::to_string(m.config.residual_blocks)},
                {"generator_norm", m.config.generator_norm ? "instance" : "none"}};
  meta.insert(meta.end(), extra.begin(), extra.end());
  nn::save_checkpoint(path, all, meta);
}

inline CycleGanModel load_cyclegan(const std::filesystem::path& path) {
  const auto ck = nn::load_checkpoint<float>(path);
  if (ck.meta_value("kind") != "voi-cyclegan") throw Error("'" + path.string() + "' is not a CycleGAN checkpoint");
  CycleGanConfig c;
  c.image_side = int(parse_int(ck.meta_value("image_side"), 1));
  c.width = int(parse_int(ck.meta_value("width"), 1));
  c.residual_blocks = int(parse_int(ck.meta_value("residual_blocks"), 1));
  const auto norm = ck.meta_value("generator_norm");
  if (norm != "instance" && norm != "none") throw Error("unknown generator norm '" + norm + "'");
  c.generator_norm = norm == "instance";
  CycleGanModel m = build_cyclegan(c, 0);
  for (const auto& [prefix, store] : {std::pair<std::string, nn::ParameterStore<float>*>{"G.", &m.G},
                                      {"F.", &m.F}, {"Dsrc.", &m.D_src}, {"Dtgt.", &m.D_tgt}})
    for (std::size_t i = 0; i < store->size(); ++i) store->assign(store->entry(i).name, ck.store.value(prefix + store->entry(i).name));
  return m;
}

}  // namespace voi::gan
