#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "voi/nn.hpp"
#include "voi/render.hpp"
#include "voi/tensor_image.hpp"

namespace voi::clf {

// ---------------------------------------------------------------------------
// Configuration

struct ClassifierConfig {
  int input_side = 64;
  int stem_width = 16;
  int stem_stride = 2;
  std::vector<int> widths{16, 32, 64};  // one stage per entry; stages after the first halve the side
  int blocks_per_stage = 2;
  int num_classes = 0;

  int downsampling() const { return stem_stride << (widths.empty() ? 0 : widths.size() - 1); }
};

inline void validate(const ClassifierConfig& c) {
  if (c.num_classes < 2) throw Error("a classifier needs at least 2 classes, got " + std::to_string(c.num_classes));
  if (c.input_side <= 0 || c.stem_width <= 0 || c.blocks_per_stage <= 0 || c.widths.empty())
    throw Error("classifier dimensions must be positive");
  if (c.stem_stride != 1 && c.stem_stride != 2) throw Error("stem stride must be 1 or 2");
  for (int w : c.widths)
    if (w <= 0) throw Error("stage widths must be positive");
  if (c.input_side % c.downsampling() != 0)
    throw Error("input side " + std::to_string(c.input_side) + " is not divisible by the downsampling factor " +
                std::to_string(c.downsampling()));
}

struct AugmentConfig {
  double rotation_deg = 15;
  int translation_px = 10;
  double color_shift = 0.1;
};

struct TrainConfig {
  nn::AdamConfig adam;
  int epochs = 20;
  int batch_size = 32;
  bool oversample = true;
  bool augment = true;
  AugmentConfig aug;
  int val_modulus = 10;  // rows whose hash % val_modulus == 0 are held out
};

inline void validate(const TrainConfig& c) {
  nn::validate(c.adam);
  if (c.epochs < 1) throw Error("epochs must be >= 1");
  if (c.batch_size < 1) throw Error("batch size must be >= 1");
  if (c.aug.rotation_deg < 0 || c.aug.translation_px < 0 || c.aug.color_shift < 0)
    throw Error("augmentation ranges must be non-negative");
}

// ---------------------------------------------------------------------------
// Network: stride-2 stem, pre-activation residual stages, BN-ReLU, global pool, dense

namespace detail {

inline std::string block_name(std::size_t stage, int block) {
  return "s" + std::to_string(stage) + "b" + std::to_string(block);
}

}  // namespace detail

template <typename T>
nn::ParameterStore<T> build_model(const ClassifierConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng = Rng::split(seed, 0xC1A55);
  nn::ParameterStore<T> s;
  nn::add_conv(s, "stem", 3, std::size_t(cfg.stem_width), 3, rng, false);
  std::size_t cin = std::size_t(cfg.stem_width);
  for (std::size_t st = 0; st < cfg.widths.size(); ++st) {
    const auto cout = std::size_t(cfg.widths[st]);
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const auto name = detail::block_name(st, b);
      const bool down = st > 0 && b == 0;
      nn::add_norm(s, name + ".bn1", cin, true);
      nn::add_conv(s, name + ".conv1", cin, cout, 3, rng, false);
      nn::add_norm(s, name + ".bn2", cout, true);
      nn::add_conv(s, name + ".conv2", cout, cout, 3, rng, false);
      if (down || cin != cout) nn::add_conv(s, name + ".proj", cin, cout, 1, rng, false);
      cin = cout;
    }
  }
  nn::add_norm(s, "head.bn", cin, true);
  nn::add_dense(s, "head.dense", cin, std::size_t(cfg.num_classes), rng);
  return s;
}

/// Logits [N, classes] for an [N, 3, side, side] batch.
template <typename T>
nn::Var<T> forward_logits(nn::ParameterStore<T>& s, const ClassifierConfig& cfg, nn::Var<T> x, bool training,
                          bool track = true) {
  using namespace nn;
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[1] != 3 || xs[2] != std::size_t(cfg.input_side) || xs[3] != std::size_t(cfg.input_side))
    throw Error("classifier expects [N, 3, " + std::to_string(cfg.input_side) + ", " +
                std::to_string(cfg.input_side) + "] input, got " + shape_str(xs));
  Var<T> h = conv_layer(x, s, "stem", Conv2dOptions::same(3, cfg.stem_stride), track);
  for (std::size_t st = 0; st < cfg.widths.size(); ++st)
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const auto name = detail::block_name(st, b);
      const int stride = (st > 0 && b == 0) ? 2 : 1;
      Var<T> a = relu(batch_norm_layer(h, s, name + ".bn1", training, track));
      Var<T> shortcut = s.contains(name + ".proj.weight") ? conv_layer(a, s, name + ".proj", Conv2dOptions::valid(stride), track)
                                                   : h;
      Var<T> r = conv_layer(a, s, name + ".conv1", Conv2dOptions::same(3, stride), track);
      r = relu(batch_norm_layer(r, s, name + ".bn2", training, track));
      r = conv_layer(r, s, name + ".conv2", Conv2dOptions::same(3), track);
      h = add(r, shortcut);
    }
  h = relu(batch_norm_layer(h, s, "head.bn", training, track));
  return dense_layer(global_avg_pool(h), s, "head.dense", track);
}

// ---------------------------------------------------------------------------
// Data preparation

/// Duplicates rows of smaller classes (sampling with replacement) until every class in
/// [0, classes) has the maximum count. Original rows keep their order; duplicates follow.
inline sim::DatasetManifest oversample(const sim::DatasetManifest& m, std::uint64_t seed,
                                       const std::vector<std::string>& names = {}) {
  std::vector<std::vector<std::size_t>> by_class(std::size_t(std::max(m.classes, 0)));
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const int c = m.rows[i].class_index;
    if (c < 0 || c >= m.classes) throw Error("row class " + std::to_string(c) + " outside catalog");
    by_class[std::size_t(c)].push_back(i);
  }
  std::size_t target = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) {
      const auto& label = c < names.size() ? names[c] : (c < m.class_names.size() ? m.class_names[c] : std::to_string(c));
      throw Error("class '" + label + "' has no rows to oversample");
    }
    target = std::max(target, by_class[c].size());
  }
  sim::DatasetManifest out = m;
  Rng rng = Rng::split(seed, 0x0575);
  for (const auto& rows : by_class)
    for (std::size_t k = rows.size(); k < target; ++k) out.rows.push_back(m.rows[rows[rng.index(rows.size())]]);
  return out;
}

/// Rotation about the image center (bilinear, edge-replicated), integer translation and an
/// additive per-channel shift clipped to [0, 1], on a planar [3, H, W] buffer in [0, 1].
/// Positive angles turn the content counter-clockwise on screen.
template <typename T>
void augment_planar(const T* src, T* dst, int w, int h, double angle_rad, int tx, int ty, const double shift[3]) {
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  const std::size_t hw = std::size_t(w) * h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - tx - cx, dy = y - ty - cy;
      const double sx = std::clamp(cx + c * dx - s * dy, 0.0, double(w - 1));
      const double sy = std::clamp(cy + s * dx + c * dy, 0.0, double(h - 1));
      const int x0 = std::min(int(sx), w - 1), y0 = std::min(int(sy), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        const T* p = src + ch * hw;
        const double v = (1 - fy) * ((1 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1]) +
                         fy * ((1 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1]);
        dst[ch * hw + std::size_t(y) * w + x] = static_cast<T>(std::clamp(v + shift[ch], 0.0, 1.0));
      }
    }
}

template <typename T>
void augment_planar(const T* src, T* dst, int w, int h, const AugmentConfig& cfg, Rng& rng) {
  const double angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * std::numbers::pi / 180.0;
  const int span = 2 * cfg.translation_px + 1;
  const int tx = int(rng.index(std::size_t(span))) - cfg.translation_px;
  const int ty = int(rng.index(std::size_t(span))) - cfg.translation_px;
  const double shift[3] = {rng.uniform(-cfg.color_shift, cfg.color_shift),
                           rng.uniform(-cfg.color_shift, cfg.color_shift),
                           rng.uniform(-cfg.color_shift, cfg.color_shift)};
  augment_planar(src, dst, w, h, angle, tx, ty, shift);
}

inline Image augment_image(const Image& img, const AugmentConfig& cfg, std::uint64_t seed) {
  std::vector<double> a(3 * std::size_t(img.width) * img.height), b(a.size());
  image_to_chw(img, a.data());
  Rng rng(seed);
  augment_planar(a.data(), b.data(), img.width, img.height, cfg, rng);
  return chw_to_image(b.data(), img.width, img.height);
}

/// Stable split key: the row's file name and label fields, so translated copies of an image
/// (same file name in another directory) land on the same side of the split.
inline std::uint64_t row_hash(const sim::ManifestRow& r) {
  const auto name = std::filesystem::path(r.path).filename().string();
  return fnv1a(name + "," + std::to_string(r.class_index) + "," + fmt_real(r.px.x) + "," + fmt_real(r.px.y));
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  int epoch = 0;
  double loss = 0;
  double train_acc = 0;
  double val_acc = 0;  // NaN without validation rows
};

struct TrainedClassifier {
  ClassifierConfig config;
  std::vector<std::string> class_names;
  nn::ParameterStore<float> store;
  std::vector<EpochLog> log;
  std::uint64_t seed = 0;
  std::size_t train_rows = 0, val_rows = 0;  // before oversampling
};

inline std::string training_log_text(const TrainedClassifier& c, const TrainConfig& t, const std::string& provenance) {
  std::string out;
  if (!provenance.empty()) out += provenance + "\n";
  out += "#adam lr=" + fmt_real(t.adam.lr) + " beta1=" + fmt_real(t.adam.beta1) + " beta2=" + fmt_real(t.adam.beta2) +
         " epsilon=" + fmt_real(t.adam.epsilon) + " batch=" + std::to_string(t.batch_size) + "\n";
  out += "#augment " + std::string(t.augment ? "on" : "off") + " rotation_deg=" + fmt_real(t.aug.rotation_deg) +
         " translation_px=" + std::to_string(t.aug.translation_px) + " color_shift=" + fmt_real(t.aug.color_shift) +
         " oversample=" + (t.oversample ? "on" : "off") + "\n";
  out += "epoch,loss,train_acc,val_acc\n";
  for (const auto& e : c.log)
    out += std::to_string(e.epoch) + "," + fmt_real(e.loss) + "," + fmt_real(e.train_acc) + "," +
           (std::isnan(e.val_acc) ? std::string("nan") : fmt_real(e.val_acc)) + "\n";
  return out;
}

/// Class catalog shared by all manifests (names when recorded, otherwise the class count).
inline std::vector<std::string> shared_catalog(const std::vector<sim::DatasetManifest>& ms) {
  if (ms.empty()) throw Error("no training manifests");
  for (const auto& m : ms) {
    if (m.classes != ms.front().classes)
      throw Error("manifests disagree on the class catalog: " + std::to_string(m.classes) + " vs " +
                  std::to_string(ms.front().classes) + " classes");
    if (!m.class_names.empty() && !ms.front().class_names.empty() && m.class_names != ms.front().class_names)
      throw Error("manifests disagree on the class catalog names");
  }
  for (const auto& m : ms)
    if (!m.class_names.empty()) return m.class_names;
  std::vector<std::string> names;
  for (int c = 0; c < ms.front().classes; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
};

inline LabeledImages load_rows(const sim::DatasetManifest& m, const std::vector<std::size_t>& idx, int side) {
  LabeledImages out;
  for (auto i : idx) {
    const auto& r = m.rows[i];
    Image img = read_png(m.image_path(r));
    if (img.width != side || img.height != side)
      throw Error("image '" + r.path + "' is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                  ", classifier expects " + std::to_string(side) + "x" + std::to_string(side));
    out.images.push_back(std::move(img));
    out.labels.push_back(r.class_index);
  }
  return out;
}

struct Prediction {
  std::vector<double> probs;
  int cls = 0;
};

inline int argmax_lowest(const double* p, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (p[i] > p[best]) best = i;
  return int(best);
}

/// Softmax distributions in inference mode; argmax ties go to the lower class index.
inline std::vector<Prediction> predict(TrainedClassifier& clf, const std::vector<Image>& thumbs,
                                       std::size_t batch = 32) {
  std::vector<Prediction> out;
  const int side = clf.config.input_side;
  const std::size_t k = std::size_t(clf.config.num_classes);
  const std::size_t plane = 3 * std::size_t(side) * side;
  for (std::size_t start = 0; start < thumbs.size(); start += batch) {
    const std::size_t n = std::min(batch, thumbs.size() - start);
    nn::Tensor<float> x({n, 3, std::size_t(side), std::size_t(side)});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& img = thumbs[start + i];
      if (img.width != side || img.height != side)
        throw Error("thumbnail is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    ", classifier expects " + std::to_string(side) + "x" + std::to_string(side));
      image_to_chw(img, x.ptr() + i * plane);
    }
    nn::Tape<float> tape;
    const auto logits = forward_logits(clf.store, clf.config, tape.constant(std::move(x)), false, false);
    const auto probs = nn::softmax_values(logits.value());
    for (std::size_t i = 0; i < n; ++i) {
      Prediction p;
      p.probs.assign(probs.ptr() + i * k, probs.ptr() + (i + 1) * k);
      p.cls = argmax_lowest(p.probs.data(), k);
      out.push_back(std::move(p));
    }
  }
  return out;
}

inline double accuracy(const std::vector<Prediction>& p, const std::vector<int>& labels) {
  if (p.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i].cls == labels[i];
  return double(ok) / double(p.size());
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Concatenates the manifests, holds out rows by hash, oversamples the rest and trains with
/// Adam on augmented mini-batches. Single-threaded and deterministic per seed.
inline TrainedClassifier train(const std::vector<sim::DatasetManifest>& manifests, ClassifierConfig ccfg,
                               const TrainConfig& tcfg, std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  validate(tcfg);
  const auto names = shared_catalog(manifests);
  ccfg.num_classes = int(names.size());
  validate(ccfg);

  sim::DatasetManifest all;
  all.classes = manifests.front().classes;
  all.class_names = names;
  sim::DatasetManifest val = all;
  // rows keep absolute image paths so manifests from different directories can be mixed
  for (const auto& m : manifests)
    for (const auto& r : m.rows) {
      auto row = r;
      row.path = m.image_path(r).string();
      (tcfg.val_modulus > 0 && row_hash(r) % std::uint64_t(tcfg.val_modulus) == 0 ? val : all).rows.push_back(row);
    }
  if (all.rows.empty()) throw Error("no training rows after the validation split");
  const auto train_m = tcfg.oversample ? oversample(all, seed, names) : all;

  std::vector<std::size_t> idx(train_m.rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto train_data = load_rows(train_m, idx, ccfg.input_side);
  idx.resize(val.rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto val_data = load_rows(val, idx, ccfg.input_side);

  TrainedClassifier clf;
  clf.config = ccfg;
  clf.class_names = names;
  clf.seed = seed;
  clf.train_rows = all.rows.size();
  clf.val_rows = val.rows.size();
  clf.store = build_model<float>(ccfg, seed);

  const std::size_t side = std::size_t(ccfg.input_side), plane = 3 * side * side;
  std::vector<std::vector<float>> planar(train_data.images.size(), std::vector<float>(plane));
  for (std::size_t i = 0; i < planar.size(); ++i) image_to_chw(train_data.images[i], planar[i].data());

  long step = 0;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::vector<std::size_t> order(planar.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::split(seed, 0x5000 + std::uint64_t(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(tcfg.batch_size)) {
      const std::size_t n = std::min(std::size_t(tcfg.batch_size), order.size() - start);
      nn::Tensor<float> x({n, 3, side, side});
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = order[start + i];
        labels[i] = train_data.labels[r];
        if (tcfg.augment) {
          Rng aug = Rng::split(seed ^ 0xA06ULL, std::uint64_t(epoch) * 1000003ULL + r);
          augment_planar(planar[r].data(), x.ptr() + i * plane, int(side), int(side), tcfg.aug, aug);
        } else {
          std::copy(planar[r].begin(), planar[r].end(), x.ptr() + i * plane);
        }
      }
      nn::Tape<float> tape;
      const auto logits = forward_logits(clf.store, ccfg, tape.constant(std::move(x)), true);
      const auto loss = nn::softmax_xent(logits, std::span<const int>(labels));
      tape.backward(loss);
      nn::adam_step(clf.store, tape.gradients(clf.store), tcfg.adam, ++step);
      loss_sum += double(loss.value()[0]) * double(n);
      const std::size_t k = std::size_t(ccfg.num_classes);
      for (std::size_t i = 0; i < n; ++i) {
        const float* row = logits.value().ptr() + i * k;
        correct += std::size_t(std::max_element(row, row + k) - row) == std::size_t(labels[i]);
      }
    }
    EpochLog e{epoch, loss_sum / double(order.size()), double(correct) / double(order.size()),
               accuracy(predict(clf, val_data.images), val_data.labels)};
    clf.log.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return clf;
}

// ---------------------------------------------------------------------------
// Checkpoint with embedded catalog

inline nn::Meta classifier_meta(const TrainedClassifier& c, const nn::Meta& extra = {}) {
  nn::Meta meta{{"kind", "voi-classifier"},
                {"input_side", std::to_string(c.config.input_side)},
                {"stem_width", std::to_string(c.config.stem_width)},
                {"stem_stride", std::to_string(c.config.stem_stride)},
                {"blocks_per_stage", std::to_string(c.config.blocks_per_stage)},
                {"seed", std::to_string(c.seed)}};
  std::string widths;
  for (std::size_t i = 0; i < c.config.widths.size(); ++i) widths += (i ? "," : "") + std::to_string(c.config.widths[i]);
  meta.emplace_back("widths", widths);
  meta.emplace_back("classes", std::to_string(c.class_names.size()));
  for (std::size_t i = 0; i < c.class_names.size(); ++i) meta.emplace_back("class." + std::to_string(i), c.class_names[i]);
  meta.insert(meta.end(), extra.begin(), extra.end());
  return meta;
}

inline void save_classifier(const std::filesystem::path& path, const TrainedClassifier& c, const nn::Meta& extra = {}) {
  nn::save_checkpoint(path, c.store, classifier_meta(c, extra));
}

inline TrainedClassifier load_classifier(const std::filesystem::path& path) {
  auto ck = nn::load_checkpoint<float>(path);
  if (ck.meta_value("kind") != "voi-classifier") throw Error("'" + path.string() + "' is not a classifier checkpoint");
  TrainedClassifier c;
  auto num = [&](const std::string& key) { return int(parse_int(ck.meta_value(key), 1)); };
  c.config.input_side = num("input_side");
  c.config.stem_width = num("stem_width");
  c.config.stem_stride = num("stem_stride");
  c.config.blocks_per_stage = num("blocks_per_stage");
  c.config.widths.clear();
  for (const auto& w : split(ck.meta_value("widths"), ',')) c.config.widths.push_back(int(parse_int(w, 1)));
  const int k = num("classes");
  for (int i = 0; i < k; ++i) c.class_names.push_back(ck.meta_value("class." + std::to_string(i)));
  c.config.num_classes = k;
  c.seed = parse_uint64(ck.meta_value("seed"), 1);
  c.store = build_model<float>(c.config, 0);
  nn::restore_into(c.store, ck.store);
  return c;
}

}  // namespace voi::clf
