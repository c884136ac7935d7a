#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "voi/geobaseline.hpp"
#include "voi/render.hpp"

namespace voi::sim {

// Synthetic "recorded experiment": a head-mounted scene camera drifting around the stimulus,
// gaze fixating surface points, the rendered replay video with the fixation cursor, plus the
// matching gaze export, head-pose stream and ground truth.

/// Fixed nonlinear color transform standing in for the experimental appearance.
inline Rgb appearance_shift(const Rgb& c) {
  return {0.05 + 0.9 * std::pow(std::clamp(c.g, 0.0, 1.0), 1.6), 0.1 + 0.85 * std::sqrt(std::clamp(c.b, 0.0, 1.0)),
          1.0 - 0.8 * std::clamp(c.r, 0.0, 1.0)};
}

inline Image appearance_shift(Image img) {
  std::array<std::uint8_t, 256 * 3> lut{};  // per-channel tables are valid: each output channel reads one input
  for (int v = 0; v < 256; ++v) {
    const double x = v / 255.0;
    const auto r = Image::to_bytes(appearance_shift(Rgb{x, x, x}));
    lut[std::size_t(v)] = r[0];        // from g
    lut[256 + std::size_t(v)] = r[1];  // from b
    lut[512 + std::size_t(v)] = r[2];  // from r
  }
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    const auto r = img.rgb[i], g = img.rgb[i + 1], b = img.rgb[i + 2];
    img.rgb[i] = lut[g];
    img.rgb[i + 1] = lut[256 + std::size_t(b)];
    img.rgb[i + 2] = lut[512 + std::size_t(r)];
  }
  return img;
}

enum class Appearance { sim, shifted };

inline Appearance parse_appearance(const std::string& s) {
  if (s == "sim") return Appearance::sim;
  if (s == "shifted") return Appearance::shifted;
  throw Error("unknown appearance '" + s + "' (expected sim or shifted)");
}

/// Thumbnail with the scene in the given appearance and the marker drawn on top.
inline Image render_styled_thumbnail(const Scene& scene, const Pose& pose, const CameraIntrinsics& k,
                                     PixelCoord marker_px, int side, const MarkerStyle& style, Appearance a) {
  if (a == Appearance::sim) return render_marker_thumbnail(scene, pose, k, marker_px, side, style);
  const auto w = gaze::crop_window(k.width_px, k.height_px, marker_px, side);
  Image img = appearance_shift(render_region(scene, pose, k, w.x0, w.y0, side, side));
  draw_marker(img, int(std::lround(marker_px.x)) - w.x0, int(std::lround(marker_px.y)) - w.y0, style);
  return img;
}

struct ExperimentConfig {
  CameraIntrinsics intrinsics = CameraIntrinsics::centered(320, 240, 277);
  double fps = 24;
  double sample_rate_hz = 120;
  int fixations = 24;
  double fixation_min_ms = 250, fixation_max_ms = 600;
  double saccade_min_ms = 60, saccade_max_ms = 140;
  double distance_m = 1.0;
  double eye_height_m = 1.635;
  double sway_deg = 25;      // head azimuth swings within +-sway_deg
  double sway_period_s = 16;
  double gaze_offset_deg = 0;  // systematic horizontal tracking error
  std::string revisit_target;  // VOI name; empty disables target revisits
  int revisit_every = 4;
  std::vector<std::pair<double, double>> pose_dropouts_ms;  // pose samples omitted inside these spans
  MarkerStyle marker;
  Appearance appearance = Appearance::sim;
  std::uint64_t seed = 0;
  int workers = 1;
};

inline void validate(const ExperimentConfig& c) {
  validate(c.intrinsics);
  if (!(c.fps > 0) || !(c.sample_rate_hz > 0)) throw Error("frame and sample rates must be positive");
  if (c.fixations < 1) throw Error("experiment needs at least one fixation");
  if (!(c.fixation_min_ms > 0) || c.fixation_max_ms < c.fixation_min_ms) throw Error("bad fixation duration range");
  if (c.saccade_min_ms < 0 || c.saccade_max_ms < c.saccade_min_ms) throw Error("bad saccade duration range");
  if (!(c.distance_m > 0)) throw Error("viewing distance must be positive");
  if (c.revisit_every < 1) throw Error("revisit_every must be >= 1");
}

struct ExperimentFixation {
  gaze::FixationEvent event;
  Vec3 target;     // fixated world point
  int truth = 0;   // class index
  bool revisit = false;
};

struct Experiment {
  ExperimentConfig config;
  std::vector<ExperimentFixation> fixations;
  std::vector<gaze::GazeSample> samples;
  std::vector<geo::HeadPoseSample> poses;
  std::size_t frame_count = 0;
  Vec3 target_center;  // revisit target, if any
  double target_diameter_m = 0;
  double duration_ms = 0;
};

namespace detail {

inline Pose head_pose(const ExperimentConfig& c, const Vec3& aim, double phase, double t_ms) {
  const double deg = std::numbers::pi / 180;
  const double a = c.sway_deg * std::sin(2 * std::numbers::pi * t_ms / (1000 * c.sway_period_s) + phase) * deg;
  const double dz = c.eye_height_m - aim.z;
  const double r = std::sqrt(std::max(1e-6, c.distance_m * c.distance_m - dz * dz));
  return look_at({aim.x + r * std::sin(a), aim.y - r * std::cos(a), c.eye_height_m}, aim);
}

/// Gaze pixel for a fixated world point, after the systematic offset (a rotation about the
/// camera's vertical axis). nullopt when the point is behind the camera.
inline std::optional<PixelCoord> gaze_pixel(const ExperimentConfig& c, const Pose& pose, const Vec3& target) {
  Vec3 d = pose.to_local(target);
  if (c.gaze_offset_deg != 0)
    d = Quat::from_axis_angle({0, 1, 0}, c.gaze_offset_deg * std::numbers::pi / 180).rotate(d);
  if (d.z <= 0) return std::nullopt;
  const auto& k = c.intrinsics;
  return PixelCoord{k.cx + k.focal_px * d.x / d.z, k.cy + k.focal_px * d.y / d.z};
}

/// Class seen along the ray from the camera to `p`, or -1 when something else is hit first.
inline int visible_class(const Scene& scene, const Pose& pose, const Vec3& p) {
  const Vec3 d = p - pose.position;
  const auto hit = intersect_ray(scene, {pose.position, normalize(d)});
  if (!hit) return -1;
  if (std::abs(hit->t - norm(d)) > 1e-6) return -1;
  return hit->class_index;
}

}  // namespace detail

/// Draws the fixation schedule, targets, gaze samples and poses (no rendering).
inline Experiment simulate_experiment(const Scene& scene, const ExperimentConfig& cfg) {
  validate(cfg);
  Experiment ex;
  ex.config = cfg;
  const auto& k = cfg.intrinsics;
  const auto& cat = scene.catalog();
  const auto [lo, hi] = object_bounds(scene);
  const Vec3 aim = 0.5 * (lo + hi);
  Rng rng = Rng::split(cfg.seed, 0xE1);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  auto pose_at = [&](double t) { return detail::head_pose(cfg, aim, phase, t); };

  int target_cls = -1;
  if (!cfg.revisit_target.empty()) {
    target_cls = cat.index_of(cfg.revisit_target);
    if (cat.is_default(target_cls)) throw Error("revisit target must be a VOI");
    const auto& shape = scene.vois[std::size_t(target_cls)].shape;
    const auto [a, b] = bounds(shape);
    ex.target_center = 0.5 * (a + b);
    if (const auto* cyl = std::get_if<Cylinder>(&shape)) ex.target_diameter_m = 2 * cyl->radius;
    else ex.target_diameter_m = std::min({b.x - a.x, b.y - a.y, b.z - a.z});
  }

  // a target must stay visible and in frame over its whole fixation
  auto holds = [&](const Vec3& p, int cls, double t0, double t1) {
    for (int s = 0; s <= 4; ++s) {
      const double t = t0 + (t1 - t0) * s / 4;
      const Pose pose = pose_at(t);
      if (detail::visible_class(scene, pose, p) != cls) return false;
      const auto px = detail::gaze_pixel(cfg, pose, p);
      if (!px || !k.contains(*px)) return false;
    }
    return true;
  };

  double t = 0;
  for (int i = 0; i < cfg.fixations; ++i) {
    t += rng.uniform(cfg.saccade_min_ms, cfg.saccade_max_ms);
    const double dur = rng.uniform(cfg.fixation_min_ms, cfg.fixation_max_ms);
    ExperimentFixation f;
    f.event.id = i + 1;
    f.event.start_ms = t;
    f.event.end_ms = t + dur;
    const Pose mid = pose_at(t + dur / 2);
    bool found = false;
    if (target_cls >= 0 && i % cfg.revisit_every == cfg.revisit_every - 1) {
      const Ray r{mid.position, normalize(ex.target_center - mid.position)};
      const auto hit = intersect_ray(scene, r);
      if (hit && hit->class_index == target_cls && holds(hit->point, target_cls, f.event.start_ms, f.event.end_ms)) {
        f.target = ex.target_center;
        f.truth = target_cls;
        f.revisit = true;
        found = true;
      }
    }
    for (int attempt = 0; attempt < 40 && !found; ++attempt) {
      const int want = int(rng.index(cat.size()));
      for (int tries = 0; tries < 200 && !found; ++tries) {
        const PixelCoord px{rng.uniform(0, k.width_px - 1), rng.uniform(0, k.height_px - 1)};
        const Ray r = ray_for_pixel(mid, k, px);
        const auto hit = intersect_ray(scene, r);
        const int cls = hit ? hit->class_index : cat.environment();
        if (cls != want || !hit) continue;  // sky is not a fixation target
        if (!holds(hit->point, cls, f.event.start_ms, f.event.end_ms)) continue;
        f.target = hit->point;
        f.truth = cls;
        found = true;
      }
    }
    if (!found) throw Error("could not place fixation " + std::to_string(i + 1) + " on a visible target");
    ex.fixations.push_back(f);
    t += dur;
  }
  ex.duration_ms = t + cfg.saccade_max_ms;

  // gaze samples and poses on one clock; saccades sweep between consecutive targets
  const double dt = 1000.0 / cfg.sample_rate_hz;
  std::size_t fi = 0;
  for (std::size_t n = 0;; ++n) {
    const double ts = double(n) * dt;
    if (ts > ex.duration_ms) break;
    while (fi < ex.fixations.size() && ex.fixations[fi].event.end_ms < ts) ++fi;
    Vec3 p;
    if (fi < ex.fixations.size() && ts >= ex.fixations[fi].event.start_ms) {
      p = ex.fixations[fi].target;
    } else if (fi == 0) {
      p = ex.fixations[0].target;
    } else if (fi >= ex.fixations.size()) {
      p = ex.fixations.back().target;
    } else {
      const auto& a = ex.fixations[fi - 1];
      const auto& b = ex.fixations[fi];
      const double s = (ts - a.event.end_ms) / (b.event.start_ms - a.event.end_ms);
      p = a.target + s * (b.target - a.target);
    }
    const Pose pose = pose_at(ts);
    bool dropped = false;
    for (const auto& [d0, d1] : cfg.pose_dropouts_ms) dropped = dropped || (ts >= d0 && ts <= d1);
    if (!dropped) ex.poses.push_back({ts, pose});
    const auto px = detail::gaze_pixel(cfg, pose, p);
    if (px) ex.samples.push_back({ts, px->x, px->y});
  }
  for (auto& f : ex.fixations) {
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (const auto& s : ex.samples)
      if (s.t_ms >= f.event.start_ms && s.t_ms <= f.event.end_ms) {
        sx += s.x_px;
        sy += s.y_px;
        ++n;
      }
    if (n == 0) throw Error("fixation " + std::to_string(f.event.id) + " has no gaze samples");
    f.event.cx_px = sx / double(n);
    f.event.cy_px = sy / double(n);
  }
  ex.frame_count = std::size_t(std::floor(ex.duration_ms * cfg.fps / 1000.0)) + 1;
  return ex;
}

/// Gaze pixel shown in frame i: the latest sample at or before the frame time.
inline std::optional<PixelCoord> cursor_at(const Experiment& ex, double t_ms) {
  auto it = std::upper_bound(ex.samples.begin(), ex.samples.end(), t_ms,
                             [](double t, const gaze::GazeSample& s) { return t < s.t_ms; });
  if (it == ex.samples.begin()) return std::nullopt;
  --it;
  return PixelCoord{it->x_px, it->y_px};
}

struct ExperimentFiles {
  std::filesystem::path frames_dir, samples, events, truth, poses, info;
};

inline ExperimentFiles experiment_files(const std::filesystem::path& dir) {
  return {dir / "frames", dir / "gaze_samples.csv", dir / "fixations.csv", dir / "truth.csv", dir / "poses.csv",
          dir / "experiment.txt"};
}

/// Writes frames, gaze export, poses, truth and an info file describing the camera and target.
inline ExperimentFiles write_experiment(const Scene& scene, const Experiment& ex, const std::filesystem::path& dir,
                                        const std::string& provenance = {}) {
  const auto files = experiment_files(dir);
  std::filesystem::create_directories(files.frames_dir);
  const auto& cfg = ex.config;
  const auto [lo, hi] = object_bounds(scene);
  const Vec3 aim = 0.5 * (lo + hi);
  Rng rng = Rng::split(cfg.seed, 0xE1);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  parallel_for(ex.frame_count, cfg.workers, [&](std::size_t i) {
    const double t = 1000.0 * double(i) / cfg.fps;
    Image frame = render_frame(scene, detail::head_pose(cfg, aim, phase, t), cfg.intrinsics);
    if (cfg.appearance == Appearance::shifted) frame = appearance_shift(std::move(frame));
    if (const auto c = cursor_at(ex, t)) draw_marker(frame, int(std::lround(c->x)), int(std::lround(c->y)), cfg.marker);
    write_png(files.frames_dir / gaze::frame_filename(i), frame);
  });
  auto head = [&](std::string cols) { return (provenance.empty() ? "" : provenance + "\n") + cols + "\n"; };
  std::string s = head("t_ms,x_px,y_px");
  for (const auto& g : ex.samples) s += fmt_real(g.t_ms) + "," + fmt_real(g.x_px) + "," + fmt_real(g.y_px) + "\n";
  write_file(files.samples, s);
  std::string e = head("id,start_ms,end_ms,cx_px,cy_px,revisit");
  std::string tr = head("id,start_ms,end_ms,cx_px,cy_px,class");
  const auto& cat = scene.catalog();
  for (const auto& f : ex.fixations) {
    const auto common = std::to_string(f.event.id) + "," + fmt_real(f.event.start_ms) + "," + fmt_real(f.event.end_ms) +
                        "," + fmt_real(f.event.cx_px) + "," + fmt_real(f.event.cy_px) + ",";
    e += common + (f.revisit ? "1" : "0") + "\n";
    tr += common + cat.name(f.truth) + "\n";
  }
  write_file(files.events, e);
  write_file(files.truth, tr);
  write_file(files.poses, geo::poses_text(ex.poses, provenance));
  std::string info = provenance.empty() ? "" : provenance + "\n";
  const auto& k = cfg.intrinsics;
  info += "width = " + std::to_string(k.width_px) + "\nheight = " + std::to_string(k.height_px) +
          "\nfocal = " + fmt_real(k.focal_px) + "\ncx = " + fmt_real(k.cx) + "\ncy = " + fmt_real(k.cy) +
          "\nfps = " + fmt_real(cfg.fps) + "\nframes = " + std::to_string(ex.frame_count) +
          "\ngaze_offset_deg = " + fmt_real(cfg.gaze_offset_deg) + "\n";
  if (!cfg.revisit_target.empty())
    info += "target = " + cfg.revisit_target + "\ntarget_center = " + fmt_real(ex.target_center.x) + " " +
            fmt_real(ex.target_center.y) + " " + fmt_real(ex.target_center.z) +
            "\ntarget_diameter = " + fmt_real(ex.target_diameter_m) + "\n";
  write_file(files.info, info);
  return files;
}

}  // namespace voi::sim
