#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "voi/classifier.hpp"
#include "voi/cyclegan.hpp"
#include "voi/evaluate.hpp"
#include "voi/geobaseline.hpp"

namespace voi {

// ---------------------------------------------------------------------------
// key = value configuration

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(line_no, "empty key");
    if (out.count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
    out[key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

/// Typed reads from a key/value map; every key read is marked so leftovers can be reported.
class ConfigReader {
 public:
  explicit ConfigReader(KeyValues kv) : kv_(std::move(kv)) {}

  std::string str(const std::string& key, const std::string& def = {}) {
    used_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }
  double real(const std::string& key, double def) {
    const auto s = str(key);
    if (s.empty()) return def;
    try {
      return parse_real(s, 0);
    } catch (const Error&) {
      throw Error("config key '" + key + "': '" + s + "' is not a number");
    }
  }
  long long integer(const std::string& key, long long def) {
    const auto s = str(key);
    if (s.empty()) return def;
    try {
      return parse_int(s, 0);
    } catch (const Error&) {
      throw Error("config key '" + key + "': '" + s + "' is not an integer");
    }
  }
  bool flag(const std::string& key, bool def) {
    const auto s = str(key);
    if (s.empty()) return def;
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw Error("config key '" + key + "': expected on/off, got '" + s + "'");
  }
  void reject_unknown() const {
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) throw Error("unknown config key '" + k + "'");
  }

 private:
  KeyValues kv_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  // inputs
  std::filesystem::path scene, frames, samples, events, poses, truth, registration, out;
  // camera shared by simulation and the recorded scene video
  CameraIntrinsics camera = CameraIntrinsics::centered(320, 240, 277);
  double fps = 24;
  std::uint64_t seed = 0;
  int workers = 1;
  // simulation
  sim::CameraSamplingPlan plan;
  double marker_step_m = 0.02;
  std::size_t max_points = 16;
  int thumbnail_side = 64;
  // domain shift; gan_epochs = 0 skips the stage
  int gan_epochs = 50;
  std::size_t gan_images = 200;
  int gan_width = 16;
  int gan_blocks = 6;
  bool gan_norm = true;
  // classifier
  clf::ClassifierConfig classifier;
  clf::TrainConfig train;
  double coverage_window_ms = 100;
};

inline std::vector<double> parse_real_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_ws(s)) {
    try {
      out.push_back(parse_real(tok, 0));
    } catch (const Error&) {
      throw Error("config key '" + key + "': '" + std::string(tok) + "' is not a number");
    }
  }
  return out;
}

inline RunConfig run_config(const KeyValues& kv) {
  ConfigReader r(kv);
  RunConfig c;
  c.scene = r.str("scene");
  c.frames = r.str("frames");
  c.samples = r.str("samples");
  c.events = r.str("events");
  c.poses = r.str("poses");
  c.truth = r.str("truth");
  c.registration = r.str("registration");
  c.out = r.str("out");
  c.camera = CameraIntrinsics::centered(int(r.integer("camera_width", 320)), int(r.integer("camera_height", 240)),
                                        r.real("camera_focal", 277));
  c.fps = r.real("fps", c.fps);
  if (const auto s = r.str("seed"); !s.empty()) {
    try {
      c.seed = parse_uint64(s, 0);
    } catch (const Error&) {
      throw Error("config key 'seed': '" + s + "' is not an unsigned integer");
    }
  }
  c.workers = int(r.integer("workers", 1));
  c.plan.azimuth_min_deg = r.real("azimuth_min", c.plan.azimuth_min_deg);
  c.plan.azimuth_max_deg = r.real("azimuth_max", c.plan.azimuth_max_deg);
  c.plan.azimuth_step_deg = r.real("azimuth_step", c.plan.azimuth_step_deg);
  if (const auto h = r.str("eye_heights"); !h.empty()) c.plan.eye_heights_m = parse_real_list("eye_heights", h);
  if (const auto h = r.str("roll"); !h.empty()) c.plan.roll_deg = parse_real_list("roll", h);
  c.plan.distance_m = r.real("distance", c.plan.distance_m);
  c.plan.aim_jitter_deg = r.real("aim_jitter", c.plan.aim_jitter_deg);
  c.marker_step_m = r.real("marker_step", c.marker_step_m);
  c.max_points = std::size_t(r.integer("max_points", long(c.max_points)));
  c.thumbnail_side = int(r.integer("thumbnail_side", c.thumbnail_side));
  c.gan_epochs = int(r.integer("gan_epochs", c.gan_epochs));
  c.gan_images = std::size_t(r.integer("gan_images", long(c.gan_images)));
  c.gan_width = int(r.integer("gan_width", c.gan_width));
  c.gan_blocks = int(r.integer("gan_blocks", c.gan_blocks));
  c.gan_norm = r.flag("gan_norm", c.gan_norm);
  c.classifier.stem_width = int(r.integer("stem_width", c.classifier.stem_width));
  c.classifier.stem_stride = int(r.integer("stem_stride", c.classifier.stem_stride));
  c.classifier.blocks_per_stage = int(r.integer("blocks_per_stage", c.classifier.blocks_per_stage));
  c.train.epochs = int(r.integer("epochs", c.train.epochs));
  c.train.batch_size = int(r.integer("batch_size", c.train.batch_size));
  c.train.adam.lr = r.real("learning_rate", c.train.adam.lr);
  c.train.augment = r.flag("augment", c.train.augment);
  c.train.oversample = r.flag("oversample", c.train.oversample);
  c.coverage_window_ms = r.real("coverage_window_ms", c.coverage_window_ms);
  r.reject_unknown();
  c.classifier.input_side = c.thumbnail_side;
  c.plan.intrinsics = c.camera;
  c.plan.seed = c.seed;
  if (c.workers < 1) throw Error("workers must be >= 1");
  if (c.gan_epochs < 0) throw Error("gan_epochs must be >= 0");
  return c;
}

// ---------------------------------------------------------------------------
// Building blocks shared by the CLI subcommands and the pipeline

inline sim::DatasetManifest simulate(const Scene& scene, const RunConfig& c, const std::filesystem::path& dir,
                                     const std::string& provenance) {
  const auto views = sim::sample_cameras(c.plan, scene);
  sim::DatasetConfig d;
  d.thumbnail_side = c.thumbnail_side;
  d.max_points_per_class_view = c.max_points;
  d.seed = c.seed;
  d.workers = c.workers;
  d.provenance = provenance;
  return sim::generate_dataset(scene, views, {c.marker_step_m, true}, {}, d, dir);
}

inline std::vector<Image> manifest_images(const sim::DatasetManifest& m, const std::vector<std::size_t>& idx,
                                          int workers) {
  std::vector<Image> out(idx.size());
  sim::parallel_for(idx.size(), workers, [&](std::size_t i) { out[i] = read_png(m.image_path(m.rows[idx[i]])); });
  return out;
}

/// Copies the manifest into dir with every image passed through the source-to-target generator.
inline sim::DatasetManifest translate_manifest(gan::CycleGanModel& model, const sim::DatasetManifest& m,
                                               const std::filesystem::path& dir, const std::string& provenance,
                                               int workers) {
  std::filesystem::create_directories(dir);
  sim::DatasetManifest out = m;
  out.base_dir = dir;
  out.provenance = provenance;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < m.rows.size(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(m.rows.size(), start + chunk); ++i) idx.push_back(i);
    const auto shifted = gan::translate(model, manifest_images(m, idx, workers), gan::Direction::src_to_tgt);
    sim::parallel_for(idx.size(), workers,
                      [&](std::size_t i) { write_png(dir / out.rows[idx[i]].path, shifted[i]); });
  }
  write_file(dir / "manifest.csv", sim::manifest_text(out));
  return out;
}

/// Target-domain samples for the translator: thumbnails cut from the recorded video at fixations.
inline std::vector<Image> target_crops(const std::filesystem::path& frames_dir, const std::vector<gaze::GazeSample>& samples,
                                       const std::vector<gaze::FixationEvent>& events, double fps, int side,
                                       std::size_t limit) {
  const gaze::FrameIndex idx{fps, gaze::count_frames(frames_dir)};
  std::vector<Image> all;
  for (auto& g : gaze::fixation_thumbnails(frames_dir, samples, events, idx, side))
    for (auto& t : g.thumbnails) all.push_back(std::move(t.image));
  std::vector<Image> out;
  for (auto i : sim::even_subset(all.size(), limit)) out.push_back(std::move(all[i]));
  return out;
}

struct CnnAnnotation {
  std::vector<eval::FixationAnnotation> annotations;
  std::size_t thumbnails = 0, skipped = 0;
};

/// Classifies every frame thumbnail of every fixation and reduces them by popular vote; the
/// winning probability of each frame is its vote confidence.
inline CnnAnnotation annotate_cnn(clf::TrainedClassifier& model, const ClassCatalog& catalog,
                                  const std::filesystem::path& frames_dir, const std::vector<gaze::GazeSample>& samples,
                                  const std::vector<gaze::FixationEvent>& events, double fps) {
  if (int(catalog.size()) != model.config.num_classes)
    throw Error("classifier has " + std::to_string(model.config.num_classes) + " classes, scene catalog has " +
                std::to_string(catalog.size()));
  for (std::size_t i = 0; i < catalog.size() && i < model.class_names.size(); ++i)
    if (model.class_names[i] != catalog.name(int(i)))
      throw Error("classifier class '" + model.class_names[i] + "' does not match scene class '" +
                  catalog.name(int(i)) + "'");
  const gaze::FrameIndex idx{fps, gaze::count_frames(frames_dir)};
  if (idx.frame_count == 0) throw Error("no frames found in '" + frames_dir.string() + "'");
  CnnAnnotation out;
  for (const auto& g : gaze::fixation_thumbnails(frames_dir, samples, events, idx, model.config.input_side)) {
    out.skipped += g.skipped;
    if (g.thumbnails.empty()) {
      eval::FixationAnnotation none;
      none.fixation_id = g.fixation_id;
      out.annotations.push_back(none);
      continue;
    }
    std::vector<Image> imgs;
    for (const auto& t : g.thumbnails) imgs.push_back(t.image);
    out.thumbnails += imgs.size();
    std::vector<eval::Vote> votes;
    for (const auto& p : clf::predict(model, imgs)) votes.push_back({p.cls, p.probs[std::size_t(p.cls)]});
    out.annotations.push_back(eval::popular_vote(votes, catalog, g.fixation_id));
  }
  return out;
}

struct GeoAnnotation {
  std::vector<eval::FixationAnnotation> annotations;
  std::size_t uncovered_points = 0, out_of_frame_points = 0;
  double pose_coverage = 0;
};

inline GeoAnnotation annotate_geo(const Scene& scene, const std::vector<gaze::GazeSample>& samples,
                                  const std::vector<gaze::FixationEvent>& events,
                                  const std::vector<geo::HeadPoseSample>& poses, const geo::GeoConfig& cfg) {
  GeoAnnotation out;
  for (auto& r : geo::annotate_fixations(scene, samples, events, poses, cfg)) {
    out.uncovered_points += r.uncovered_points;
    out.out_of_frame_points += r.out_of_frame_points;
    out.annotations.push_back(std::move(r.annotation));
  }
  out.pose_coverage = events.empty() ? 0 : geo::pose_coverage(events, poses, cfg.coverage_window_ms);
  return out;
}

inline std::map<long long, int> annotation_map(const std::vector<eval::FixationAnnotation>& anns) {
  std::map<long long, int> m;
  for (const auto& a : anns) m[a.fixation_id] = a.cls;
  return m;
}

struct Evaluation {
  eval::MetricsReport report;
  std::size_t unannotated = 0;
};

inline Evaluation evaluate(const std::map<long long, int>& truth, const std::map<long long, int>& pred,
                           const ClassCatalog& catalog) {
  const auto c = eval::confusion(truth, pred, catalog.size());
  return {eval::weighted_metrics(c.matrix), c.unannotated};
}

// ---------------------------------------------------------------------------
// Pipeline: simulate, shift domain, train, annotate and evaluate

enum class StageStatus { done, cached, skipped };

inline std::string status_name(StageStatus s) {
  switch (s) {
    case StageStatus::done: return "done";
    case StageStatus::cached: return "cached";
    case StageStatus::skipped: return "skipped";
  }
  return "?";
}

struct StageReport {
  std::string name;
  StageStatus status = StageStatus::done;
  std::string key;
  double seconds = 0;
};

struct PipelineSummary {
  std::vector<StageReport> stages;
  std::string text;
};

using PipelineLog = std::function<void(const std::string&)>;

inline constexpr std::string_view kStageMarker = "stage.done";

inline std::string dir_digest(const std::filesystem::path& dir) {
  std::uint64_t h = fnv1a("frames");
  for (std::size_t i = 0;; ++i) {
    const auto p = dir / gaze::frame_filename(i);
    if (!std::filesystem::exists(p)) break;
    h = fnv1a(read_file(p), h);
  }
  return hex64(h);
}

inline std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  return fnv1a("stage" + std::to_string(stage), seed);
}

namespace detail {

inline std::string required(const std::filesystem::path& p, const std::string& field, const std::string& stage) {
  if (p.empty()) throw Error("stage " + stage + ": config is missing '" + field + "'");
  if (!std::filesystem::exists(p))
    throw Error("stage " + stage + ": " + field + " '" + p.string() + "' does not exist");
  return std::filesystem::is_directory(p) ? dir_digest(p) : file_digest(p);
}

/// Runs `body` unless the stage marker already records `key`. Failed stages leave no output.
inline StageReport run_stage(const std::string& name, const std::filesystem::path& dir, const std::string& key,
                             const PipelineLog& log, const std::function<void()>& body) {
  StageReport r{name, StageStatus::done, key, 0};
  const auto marker = dir / kStageMarker;
  if (std::filesystem::exists(marker) && trim(read_file(marker)) == key) {
    r.status = StageStatus::cached;
    if (log) log(name + ": cached");
    return r;
  }
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  if (log) log(name + ": running");
  try {
    body();
  } catch (const std::exception& e) {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    throw Error("stage " + name + ": " + e.what());
  }
  write_file(marker, key + "\n");
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log) log(name + ": done");
  return r;
}

}  // namespace detail

inline std::string retention_line(int side, int w, int h) {
  return "thumbnail retention " + std::to_string(side) + "x" + std::to_string(side) + " of " + std::to_string(w) +
         "x" + std::to_string(h) + ": " + fmt_fixed(100 * gaze::retention_ratio(side, w, h), 2) + "%";
}

inline PipelineSummary run_pipeline(const RunConfig& c, const PipelineLog& log = {}) {
  if (c.out.empty()) throw Error("config is missing 'out'");
  std::filesystem::create_directories(c.out);
  PipelineSummary summary;
  const auto sim_dir = c.out / "1-simulate", gan_dir = c.out / "2-domainshift", clf_dir = c.out / "3-train",
             ann_dir = c.out / "4-annotate";

  // 1. synthetic training data from the scene geometry
  const auto scene_digest = detail::required(c.scene, "scene", "simulate");
  const Scene scene = parse_scene(read_file(c.scene));
  const ClassCatalog catalog = scene.catalog();
  const std::string sim_key = hex64(fnv1a(
      "simulate scene=" + scene_digest + " seed=" + std::to_string(c.seed) + " cam=" + std::to_string(c.camera.width_px) +
      "x" + std::to_string(c.camera.height_px) + "f" + fmt_real(c.camera.focal_px) + " az=" +
      fmt_real(c.plan.azimuth_min_deg) + ":" + fmt_real(c.plan.azimuth_step_deg) + ":" + fmt_real(c.plan.azimuth_max_deg) +
      " dist=" + fmt_real(c.plan.distance_m) + " jitter=" + fmt_real(c.plan.aim_jitter_deg) + " heights=" +
      [&] { std::string s; for (double h : c.plan.heights()) s += fmt_real(h) + ";"; return s; }() + " roll=" +
      [&] { std::string s; for (double r : c.plan.roll_deg) s += fmt_real(r) + ";"; return s; }() + " step=" +
      fmt_real(c.marker_step_m) + " maxp=" + std::to_string(c.max_points) + " side=" + std::to_string(c.thumbnail_side)));
  summary.stages.push_back(detail::run_stage("simulate", sim_dir, sim_key, log, [&] {
    simulate(scene, c, sim_dir, provenance_line(c.seed, {{"scene", scene_digest}}));
  }));
  const auto sim_manifest = sim::read_manifest(sim_dir / "manifest.csv");

  // recorded experiment inputs, needed from stage 2 on
  const auto frames_digest = detail::required(c.frames, "frames", "domainshift");
  const auto samples_digest = detail::required(c.samples, "samples", "domainshift");
  const auto events_digest = detail::required(c.events, "events", "domainshift");
  const auto export_data = gaze::parse_gaze_export(read_file(c.samples), read_file(c.events));

  // 2. translate simulation images towards the recorded appearance
  const std::string gan_key = hex64(fnv1a(
      "domainshift prev=" + sim_key + " frames=" + frames_digest + " samples=" + samples_digest + " events=" +
      events_digest + " epochs=" + std::to_string(c.gan_epochs) + " images=" + std::to_string(c.gan_images) +
      " width=" + std::to_string(c.gan_width) + " blocks=" + std::to_string(c.gan_blocks) + " norm=" + (c.gan_norm ? "on" : "off") + " fps=" + fmt_real(c.fps)));
  if (c.gan_epochs == 0) {
    std::filesystem::remove_all(gan_dir);
    summary.stages.push_back({"domainshift", StageStatus::skipped, gan_key, 0});
    if (log) log("domainshift: skipped");
  } else {
    summary.stages.push_back(detail::run_stage("domainshift", gan_dir, gan_key, log, [&] {
      const auto prov = provenance_line(c.seed, {{"frames", frames_digest}, {"simulate", sim_key}});
      const auto src = manifest_images(sim_manifest, sim::even_subset(sim_manifest.rows.size(), c.gan_images), c.workers);
      const auto tgt = target_crops(c.frames, export_data.samples, export_data.events, c.fps, c.thumbnail_side,
                                    c.gan_images);
      gan::CycleGanConfig mc{c.thumbnail_side, c.gan_width, c.gan_blocks, c.gan_norm};
      gan::GanTrainConfig tc;
      tc.epochs = c.gan_epochs;
      auto res = gan::train_cyclegan(src, tgt, mc, tc, stage_seed(c.seed, 2), [&](const gan::GanEpochLog& e) {
        if (log) log("domainshift: epoch " + std::to_string(e.epoch) + " cyc " + fmt_fixed(e.mean.cyc, 4));
      });
      std::string text = prov + "\n" + gan::gan_log_header() + "\n";
      for (const auto& e : res.log) text += gan::gan_log_line(e) + "\n";
      write_file(gan_dir / "gan_log.csv", text);
      gan::save_cyclegan(gan_dir / "cyclegan.ckpt", res.model, {{"seed", std::to_string(c.seed)}});
      translate_manifest(res.model, sim_manifest, gan_dir / "synthetic", prov, c.workers);
    }));
  }

  // 3. classifier on simulation plus translated images
  const std::string clf_key = hex64(fnv1a(
      "train prev=" + (c.gan_epochs == 0 ? sim_key : gan_key) + " epochs=" + std::to_string(c.train.epochs) +
      " batch=" + std::to_string(c.train.batch_size) + " lr=" + fmt_real(c.train.adam.lr) + " augment=" +
      std::to_string(c.train.augment) + " oversample=" + std::to_string(c.train.oversample) + " stem=" +
      std::to_string(c.classifier.stem_width) + "/" + std::to_string(c.classifier.stem_stride) + " blocks=" +
      std::to_string(c.classifier.blocks_per_stage)));
  summary.stages.push_back(detail::run_stage("train", clf_dir, clf_key, log, [&] {
    std::vector<sim::DatasetManifest> sets{sim_manifest};
    if (c.gan_epochs > 0) sets.push_back(sim::read_manifest(gan_dir / "synthetic" / "manifest.csv"));
    auto model = clf::train(sets, c.classifier, c.train, stage_seed(c.seed, 3), [&](const clf::EpochLog& e) {
      if (log) log("train: epoch " + std::to_string(e.epoch) + " loss " + fmt_fixed(e.loss, 4) + " acc " +
                   fmt_fixed(e.train_acc, 3));
    });
    write_file(clf_dir / "training_log.csv",
               clf::training_log_text(model, c.train, provenance_line(c.seed, {{"train", clf_key}})));
    clf::save_classifier(clf_dir / "classifier.ckpt", model);
  }));

  // 4. annotate the recorded fixations; evaluate and compare when ground truth is given
  std::string truth_digest, poses_digest, reg_digest;
  if (!c.truth.empty()) truth_digest = detail::required(c.truth, "truth", "annotate");
  if (!c.poses.empty()) poses_digest = detail::required(c.poses, "poses", "annotate");
  if (!c.registration.empty()) reg_digest = detail::required(c.registration, "registration", "annotate");
  const std::string ann_key = hex64(fnv1a("annotate prev=" + clf_key + " frames=" + frames_digest + " samples=" +
                                          samples_digest + " events=" + events_digest + " truth=" + truth_digest +
                                          " poses=" + poses_digest + " reg=" + reg_digest + " fps=" + fmt_real(c.fps) +
                                          " window=" + fmt_real(c.coverage_window_ms)));
  summary.stages.push_back(detail::run_stage("annotate", ann_dir, ann_key, log, [&] {
    std::map<std::string, std::string> digests{{"frames", frames_digest}, {"samples", samples_digest},
                                               {"events", events_digest}, {"train", clf_key}};
    const auto prov = provenance_line(c.seed, digests);
    auto model = clf::load_classifier(clf_dir / "classifier.ckpt");
    const auto cnn = annotate_cnn(model, catalog, c.frames, export_data.samples, export_data.events, c.fps);
    write_file(ann_dir / "annotations_cnn.csv", eval::annotations_text(cnn.annotations, catalog, prov));
    std::string report = "fixations " + std::to_string(export_data.events.size()) + "\nthumbnails " +
                         std::to_string(cnn.thumbnails) + "\nskipped_frames " + std::to_string(cnn.skipped) + "\n";
    std::vector<eval::NamedReport> reports;
    std::map<long long, int> truth;
    if (!c.truth.empty()) {
      truth = eval::parse_truth(read_file(c.truth), catalog);
      const auto e = evaluate(truth, annotation_map(cnn.annotations), catalog);
      write_file(ann_dir / "metrics_cnn.csv", eval::metrics_csv(e.report, catalog.names, prov));
      reports.push_back({"synthetic+gan", "recorded", e.report});
      report += "cnn unannotated " + std::to_string(e.unannotated) + "\n";
    }
    if (!c.poses.empty()) {
      geo::GeoConfig g;
      g.intrinsics = c.camera;
      g.coverage_window_ms = c.coverage_window_ms;
      g.workers = c.workers;
      if (!c.registration.empty()) g.registration = geo::parse_registration(read_file(c.registration));
      const auto poses = geo::parse_poses(read_file(c.poses));
      const auto geo_ann = annotate_geo(scene, export_data.samples, export_data.events, poses, g);
      write_file(ann_dir / "annotations_geo.csv", eval::annotations_text(geo_ann.annotations, catalog, prov));
      report += "pose_coverage " + fmt_fixed(geo_ann.pose_coverage, 4) + "\n";
      if (!c.truth.empty()) {
        const auto e = evaluate(truth, annotation_map(geo_ann.annotations), catalog);
        write_file(ann_dir / "metrics_geo.csv", eval::metrics_csv(e.report, catalog.names, prov));
        reports.push_back({"geometric", "recorded", e.report});
        report += "geo unannotated " + std::to_string(e.unannotated) + "\n";
      }
    }
    if (reports.size() >= 2) {
      const auto cmp = eval::compare_reports(reports, prov);
      write_file(ann_dir / "comparison.csv", cmp.csv);
      write_file(ann_dir / "comparison.txt", cmp.text);
    }
    for (const auto& r : reports)
      report += r.method + " precision " + fmt_fixed(r.report.precision, 4) + " recall " +
                fmt_fixed(r.report.recall, 4) + " f1 " + fmt_fixed(r.report.f1, 4) + "\n";
    write_file(ann_dir / "report.txt", prov + "\n" + report);
  }));

  std::string text = provenance_line(c.seed, {{"scene", scene_digest}}) + "\n";
  for (const auto& s : summary.stages) text += "stage " + s.name + " " + status_name(s.status) + "\n";
  text += read_file(ann_dir / "report.txt").substr(read_file(ann_dir / "report.txt").find('\n') + 1);
  text += retention_line(c.thumbnail_side, c.camera.width_px, c.camera.height_px) + "\n";
  text += retention_line(224, 1280, 960) + "\n";
  write_file(c.out / "summary.txt", text);
  summary.text = text;
  return summary;
}

}  // namespace voi
