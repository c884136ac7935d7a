#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "voi/evaluate.hpp"
#include "voi/gaze.hpp"
#include "voi/geometry.hpp"
#include "voi/render.hpp"
#include "voi/scene.hpp"

namespace voi::geo {

struct HeadPoseSample {
  double t_ms = 0;
  Pose pose;
};

inline constexpr std::string_view kPoseColumns = "t_ms,x,y,z,qw,qx,qy,qz";

/// Quaternions within 1e-6 of unit norm are renormalized; anything further off is an error.
inline std::vector<HeadPoseSample> parse_poses(std::string_view text) {
  const auto t = parse_csv(text);
  std::array<std::size_t, 8> col{};
  const auto names = split(kPoseColumns, ',');
  for (std::size_t i = 0; i < 8; ++i) col[i] = t.column(names[i]);
  std::vector<HeadPoseSample> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = t.row_lines[r];
    double v[8];
    for (std::size_t i = 0; i < 8; ++i) v[i] = parse_real(t.rows[r][col[i]], line);
    Quat q{v[4], v[5], v[6], v[7]};
    if (std::abs(q.norm() - 1.0) > 1e-6) throw ParseError(line, "pose quaternion is not unit length");
    HeadPoseSample s{v[0], {{v[1], v[2], v[3]}, q.normalized()}};
    if (!out.empty() && s.t_ms < out.back().t_ms) throw ParseError(line, "non-monotone pose timestamp " + fmt_real(s.t_ms));
    out.push_back(s);
  }
  return out;
}

inline std::string poses_text(const std::vector<HeadPoseSample>& poses, const std::string& provenance = {}) {
  std::string out;
  if (!provenance.empty()) out += provenance + "\n";
  out += std::string(kPoseColumns) + "\n";
  for (const auto& s : poses) {
    const auto& p = s.pose;
    out += fmt_real(s.t_ms) + "," + fmt_real(p.position.x) + "," + fmt_real(p.position.y) + "," +
           fmt_real(p.position.z) + "," + fmt_real(p.orientation.w) + "," + fmt_real(p.orientation.x) + "," +
           fmt_real(p.orientation.y) + "," + fmt_real(p.orientation.z) + "\n";
  }
  return out;
}

/// Pose at t from the bracketing samples. Uncovered (nullopt) when t lies outside the stream
/// or the bracketing samples are more than window_ms apart.
inline std::optional<Pose> interpolate_pose(const std::vector<HeadPoseSample>& poses, double t_ms,
                                            double window_ms = 100) {
  if (poses.empty()) throw Error("pose stream is empty");
  auto hi = std::lower_bound(poses.begin(), poses.end(), t_ms,
                             [](const HeadPoseSample& s, double t) { return s.t_ms < t; });
  if (hi != poses.end() && hi->t_ms == t_ms) return hi->pose;
  if (hi == poses.begin() || hi == poses.end()) return std::nullopt;
  const auto lo = std::prev(hi);
  const double gap = hi->t_ms - lo->t_ms;
  if (gap > window_ms) return std::nullopt;
  const double s = (t_ms - lo->t_ms) / gap;
  return Pose{lo->pose.position + s * (hi->pose.position - lo->pose.position),
              slerp(lo->pose.orientation, hi->pose.orientation, s)};
}

/// True when every instant of [start, end] has an interpolable pose.
inline bool span_covered(const std::vector<HeadPoseSample>& poses, double start_ms, double end_ms,
                         double window_ms = 100) {
  if (poses.empty()) return false;
  if (start_ms < poses.front().t_ms || end_ms > poses.back().t_ms) return false;
  auto it = std::upper_bound(poses.begin(), poses.end(), start_ms,
                             [](double t, const HeadPoseSample& s) { return t < s.t_ms; });
  if (it != poses.begin()) --it;
  for (; it != poses.end() && it->t_ms < end_ms; ++it) {
    const auto nx = std::next(it);
    if (nx == poses.end()) break;
    if (nx->t_ms - it->t_ms > window_ms) return false;
  }
  return true;
}

inline double pose_coverage(const std::vector<gaze::FixationEvent>& fixations,
                            const std::vector<HeadPoseSample>& poses, double window_ms = 100) {
  if (fixations.empty()) throw Error("no fixations for pose coverage");
  std::size_t covered = 0;
  for (const auto& f : fixations) covered += span_covered(poses, f.start_ms, f.end_ms, window_ms);
  return double(covered) / double(fixations.size());
}

// ---------------------------------------------------------------------------
// Registration: tracker camera frame -> head pose frame

struct Registration {
  std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation;

  Vec3 rotate(const Vec3& v) const {
    const auto& r = rotation;
    return {r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z, r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z};
  }
};

inline void validate(const Registration& reg) {
  const auto& r = reg.rotation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += r[std::size_t(k)][std::size_t(i)] * r[std::size_t(k)][std::size_t(j)];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-9) throw Error("registration rotation is not orthonormal");
    }
  const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  if (det < 0) throw Error("registration rotation is a reflection");
  if (!is_finite(reg.translation)) throw Error("registration translation is not finite");
}

/// 12 numbers: row-major rotation then translation, separated by spaces and/or commas.
inline Registration parse_registration(std::string_view text) {
  std::string s(text);
  std::replace(s.begin(), s.end(), ',', ' ');
  const auto tok = split_ws(s);
  if (tok.size() != 12) throw Error("registration needs 12 numbers, got " + std::to_string(tok.size()));
  Registration r;
  for (std::size_t i = 0; i < 9; ++i) r.rotation[i / 3][i % 3] = parse_real(tok[i], 1);
  r.translation = {parse_real(tok[9], 1), parse_real(tok[10], 1), parse_real(tok[11], 1)};
  validate(r);
  return r;
}

inline std::string registration_text(const Registration& r) {
  std::string out;
  for (const auto& row : r.rotation)
    for (double v : row) out += fmt_real(v) + " ";
  return out + fmt_real(r.translation.x) + " " + fmt_real(r.translation.y) + " " + fmt_real(r.translation.z);
}

inline Ray gaze_ray_dir(const Pose& pose, const Registration& reg, const Vec3& cam_dir) {
  return {pose.to_world(reg.translation), normalize(pose.orientation.rotate(reg.rotate(cam_dir)))};
}

inline Ray gaze_ray(const Pose& pose, const Registration& reg, PixelCoord gaze_px, const CameraIntrinsics& k) {
  if (!k.contains(gaze_px))
    throw Error("gaze pixel (" + fmt_real(gaze_px.x) + ", " + fmt_real(gaze_px.y) + ") outside the scene camera");
  return gaze_ray_dir(pose, reg, camera_direction(k, gaze_px));
}

/// Angle input in the tracker camera frame: azimuth positive to the right, elevation
/// positive upwards, (0, 0) straight ahead.
inline Vec3 direction_from_angles(double azimuth_deg, double elevation_deg) {
  const double a = azimuth_deg * std::numbers::pi / 180, e = elevation_deg * std::numbers::pi / 180;
  return {std::cos(e) * std::sin(a), -std::sin(e), std::cos(e) * std::cos(a)};
}

inline std::pair<double, double> angles_from_direction(const Vec3& d) {
  const Vec3 u = normalize(d);
  return {std::atan2(u.x, u.z) * 180 / std::numbers::pi,
          std::asin(std::clamp(-u.y, -1.0, 1.0)) * 180 / std::numbers::pi};
}

// ---------------------------------------------------------------------------
// Scan point annotation

struct ScanPoint {
  double t_ms = 0;
  PixelCoord px;
  std::optional<std::pair<double, double>> angles_deg;  // used instead of px when set
};

struct PointLabel {
  int cls = -1;  // -1 when the pose is uncovered
  bool covered = false;
};

struct GeoConfig {
  Registration registration;
  CameraIntrinsics intrinsics;
  double coverage_window_ms = 100;
  int workers = 1;
};

inline std::vector<PointLabel> annotate_scanpoints(const Scene& scene, const std::vector<ScanPoint>& points,
                                                   const std::vector<HeadPoseSample>& poses, const GeoConfig& cfg) {
  std::vector<PointLabel> out(points.size());
  sim::parallel_for(points.size(), cfg.workers, [&](std::size_t i) {
    const auto& p = points[i];
    const auto pose = interpolate_pose(poses, p.t_ms, cfg.coverage_window_ms);
    if (!pose) return;
    const Ray ray = p.angles_deg
                        ? gaze_ray_dir(*pose, cfg.registration, direction_from_angles(p.angles_deg->first, p.angles_deg->second))
                        : gaze_ray(*pose, cfg.registration, p.px, cfg.intrinsics);
    out[i] = {class_along_ray(scene, ray), true};
  });
  return out;
}

struct GeoFixationResult {
  eval::FixationAnnotation annotation;
  std::size_t uncovered_points = 0;
  std::size_t out_of_frame_points = 0;
};

/// Scan points of a fixation are the gaze samples inside [start, end]. Uncovered points and
/// samples outside the scene camera do not vote; a fixation left without votes is unannotated.
inline std::vector<GeoFixationResult> annotate_fixations(const Scene& scene,
                                                         const std::vector<gaze::GazeSample>& samples,
                                                         const std::vector<gaze::FixationEvent>& events,
                                                         const std::vector<HeadPoseSample>& poses,
                                                         const GeoConfig& cfg) {
  validate(cfg.registration);
  validate(cfg.intrinsics);
  const auto& catalog = scene.catalog();
  std::vector<GeoFixationResult> out;
  for (const auto& ev : events) {
    GeoFixationResult r;
    r.annotation.fixation_id = ev.id;
    r.annotation.histogram.assign(catalog.size(), 0);
    std::vector<ScanPoint> pts;
    auto lo = std::lower_bound(samples.begin(), samples.end(), ev.start_ms,
                               [](const gaze::GazeSample& s, double t) { return s.t_ms < t; });
    for (; lo != samples.end() && lo->t_ms <= ev.end_ms; ++lo) {
      const PixelCoord px{lo->x_px, lo->y_px};
      if (!cfg.intrinsics.contains(px)) {
        ++r.out_of_frame_points;
        continue;
      }
      pts.push_back({lo->t_ms, px, std::nullopt});
    }
    std::vector<eval::Vote> votes;
    for (const auto& l : annotate_scanpoints(scene, pts, poses, cfg)) {
      if (!l.covered) {
        ++r.uncovered_points;
        continue;
      }
      votes.push_back({l.cls, std::nullopt});
    }
    if (!votes.empty()) r.annotation = eval::popular_vote(votes, catalog, ev.id);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Target QA

struct QaInput {
  std::vector<gaze::FixationEvent> revisits;  // fixations flagged as target revisits
  std::vector<gaze::GazeSample> samples;
  std::vector<HeadPoseSample> poses;
  Vec3 target_center;
  double target_diameter_m = 0.01;
};

/// Angular offset of each revisit fixation: angle between the gaze ray at the fixation
/// midpoint (event centroid pixel, pose interpolated there) and the ray to the target center.
/// Revisits whose midpoint pose is uncovered are skipped.
inline eval::QaResult qa_target_check(const std::string& participant, const QaInput& in, const GeoConfig& cfg,
                                      double threshold_deg = 1.5) {
  if (in.revisits.empty()) throw Error("no revisit fixations flagged for QA");
  std::vector<double> offsets;
  for (const auto& f : in.revisits) {
    const double mid = 0.5 * (f.start_ms + f.end_ms);
    const auto pose = interpolate_pose(in.poses, mid, cfg.coverage_window_ms);
    if (!pose) continue;
    const Ray ray = gaze_ray(*pose, cfg.registration, {f.cx_px, f.cy_px}, cfg.intrinsics);
    offsets.push_back(angle_between_deg(ray.dir, in.target_center - ray.origin));
  }
  if (offsets.empty()) throw Error("no revisit fixation of '" + participant + "' has pose coverage");
  return eval::summarize_offsets(participant, std::move(offsets), threshold_deg,
                                 pose_coverage(in.revisits, in.poses, cfg.coverage_window_ms));
}

/// Events flagged with a nonzero `revisit` column.
inline std::vector<gaze::FixationEvent> revisit_events(std::string_view events_text) {
  const auto t = parse_csv(events_text);
  if (!t.has_column("revisit")) throw Error("events file has no 'revisit' column");
  const auto cid = t.column("id"), cr = t.column("revisit");
  std::vector<long long> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (parse_int(t.rows[r][cr], t.row_lines[r]) != 0) ids.push_back(parse_int(t.rows[r][cid], t.row_lines[r]));
  std::vector<gaze::FixationEvent> out;
  for (const auto& e : gaze::parse_events(events_text))
    if (std::find(ids.begin(), ids.end(), e.id) != ids.end()) out.push_back(e);
  return out;
}

}  // namespace voi::geo
