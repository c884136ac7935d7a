#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voi/common.hpp"
#include "voi/image.hpp"

namespace voi::gaze {

struct GazeSample {
  double t_ms = 0;
  double x_px = 0;
  double y_px = 0;
};

struct FixationEvent {
  long long id = 0;
  double start_ms = 0;
  double end_ms = 0;
  double cx_px = 0;
  double cy_px = 0;
  bool out_of_bounds = false;  // centroid outside the scene video, set by flag_out_of_bounds
};

struct GazeExport {
  std::vector<GazeSample> samples;
  std::vector<FixationEvent> events;
};

/// Samples file: header with at least t_ms,x_px,y_px. Timestamps must be non-decreasing.
inline std::vector<GazeSample> parse_samples(std::string_view text) {
  const auto t = parse_csv(text);
  const auto ct = t.column("t_ms"), cx = t.column("x_px"), cy = t.column("y_px");
  std::vector<GazeSample> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = t.row_lines[r];
    GazeSample s{parse_real(t.rows[r][ct], line), parse_real(t.rows[r][cx], line),
                 parse_real(t.rows[r][cy], line)};
    if (!out.empty() && s.t_ms < out.back().t_ms)
      throw ParseError(line, "non-monotone timestamp " + fmt_real(s.t_ms));
    out.push_back(s);
  }
  return out;
}

/// Events file: header with at least id,start_ms,end_ms,cx_px,cy_px. Output is sorted by
/// start time; overlapping events and end < start are errors.
inline std::vector<FixationEvent> parse_events(std::string_view text) {
  const auto t = parse_csv(text);
  const auto cid = t.column("id"), cs = t.column("start_ms"), ce = t.column("end_ms"),
             cx = t.column("cx_px"), cy = t.column("cy_px");
  std::vector<std::pair<FixationEvent, std::size_t>> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = t.row_lines[r];
    const auto& f = t.rows[r];
    FixationEvent e{parse_int(f[cid], line), parse_real(f[cs], line), parse_real(f[ce], line),
                    parse_real(f[cx], line), parse_real(f[cy], line)};
    if (e.end_ms < e.start_ms) throw ParseError(line, "fixation end precedes start");
    rows.emplace_back(e, line);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first.start_ms < b.first.start_ms; });
  std::vector<FixationEvent> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].first.start_ms <= rows[i - 1].first.end_ms)
      throw ParseError(rows[i].second, "fixation overlaps the previous fixation");
    for (std::size_t j = 0; j < i; ++j)
      if (rows[j].first.id == rows[i].first.id)
        throw ParseError(rows[i].second, "duplicate fixation id " + std::to_string(rows[i].first.id));
    out.push_back(rows[i].first);
  }
  return out;
}

/// Either document may be absent (empty view) for samples; events are required.
inline GazeExport parse_gaze_export(std::string_view samples_text, std::string_view events_text) {
  GazeExport g;
  if (!trim(samples_text).empty()) g.samples = parse_samples(samples_text);
  g.events = parse_events(events_text);
  return g;
}

inline void flag_out_of_bounds(std::vector<FixationEvent>& events, int width, int height) {
  for (auto& e : events)
    e.out_of_bounds = !(e.cx_px >= 0 && e.cy_px >= 0 && e.cx_px <= width - 1 && e.cy_px <= height - 1);
}

struct FrameIndex {
  double fps = 24.0;
  std::size_t frame_count = 0;

  double timestamp_ms(std::size_t i) const { return 1000.0 * static_cast<double>(i) / fps; }
};

/// All frames i with start_ms <= 1000*i/fps <= end_ms (inclusive on both ends).
inline std::vector<std::size_t> frames_for_fixation(const FixationEvent& ev, const FrameIndex& idx) {
  if (!(idx.fps > 0)) throw Error("fps must be positive");
  std::vector<std::size_t> out;
  if (idx.frame_count == 0 || ev.end_ms < 0) return out;
  // Candidate range from the closed form, then the exact predicate decides each boundary.
  const double lo = std::max(0.0, std::floor(ev.start_ms * idx.fps / 1000.0) - 1);
  const double hi = std::floor(ev.end_ms * idx.fps / 1000.0) + 1;
  const auto first = static_cast<std::size_t>(lo);
  const auto last = std::min(idx.frame_count - 1, static_cast<std::size_t>(std::max(0.0, hi)));
  for (std::size_t i = first; i <= last; ++i) {
    const double ts = idx.timestamp_ms(i);
    if (ts >= ev.start_ms && ts <= ev.end_ms) out.push_back(i);
  }
  return out;
}

/// Crop window placement: centered on the rounded center, shifted the minimal amount to
/// stay inside the frame. offset = requested center - window center.
struct CropWindow {
  int x0 = 0, y0 = 0, side = 0;
  int dx = 0, dy = 0;

  int center_x() const { return x0 + side / 2; }
  int center_y() const { return y0 + side / 2; }
};

inline CropWindow crop_window(int frame_w, int frame_h, PixelCoord center, int side) {
  if (side <= 0) throw Error("thumbnail side must be positive");
  if (side > frame_w || side > frame_h)
    throw Error("thumbnail side " + std::to_string(side) + " larger than frame " +
                std::to_string(frame_w) + "x" + std::to_string(frame_h));
  const auto cx = static_cast<int>(std::lround(center.x));
  const auto cy = static_cast<int>(std::lround(center.y));
  if (cx < 0 || cy < 0 || cx >= frame_w || cy >= frame_h) throw Error("crop center outside frame");
  CropWindow w;
  w.side = side;
  w.x0 = std::clamp(cx - side / 2, 0, frame_w - side);
  w.y0 = std::clamp(cy - side / 2, 0, frame_h - side);
  w.dx = cx - w.center_x();
  w.dy = cy - w.center_y();
  return w;
}

/// Fraction of frame pixels a thumbnail keeps.
inline double retention_ratio(int side, int frame_w, int frame_h) {
  return static_cast<double>(side) * side / (static_cast<double>(frame_w) * frame_h);
}

struct Thumbnail {
  Image image;
  long long fixation_id = 0;
  std::size_t frame_index = 0;
  int dx = 0, dy = 0;  // marker offset from the thumbnail center
};

inline Thumbnail crop_thumbnail(const Image& frame, PixelCoord center, int side) {
  const auto w = crop_window(frame.width, frame.height, center, side);
  return {sub_image(frame, w.x0, w.y0, side, side), 0, 0, w.dx, w.dy};
}

/// Nearest sample in time within [lo_ms, hi_ms]; exact ties pick the earlier sample.
inline std::optional<GazeSample> nearest_sample(const std::vector<GazeSample>& samples, double t_ms,
                                                double lo_ms, double hi_ms) {
  auto it = std::lower_bound(samples.begin(), samples.end(), t_ms,
                             [](const GazeSample& s, double t) { return s.t_ms < t; });
  std::optional<GazeSample> best;
  double best_d = 0;
  auto consider = [&](const GazeSample& s) {
    if (s.t_ms < lo_ms || s.t_ms > hi_ms) return;
    const double d = std::abs(s.t_ms - t_ms);
    if (!best || d < best_d || (d == best_d && s.t_ms < best->t_ms)) {
      best = s;
      best_d = d;
    }
  };
  if (it != samples.end()) consider(*it);
  if (it != samples.begin()) {
    // walk back over equal timestamps so the earliest of a run wins
    auto prev = std::prev(it);
    const double tp = prev->t_ms;
    while (prev != samples.begin() && std::prev(prev)->t_ms == tp) --prev;
    consider(*prev);
  }
  return best;
}

inline std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.png", index);
  return buf;
}

/// Number of consecutive frame_%06d.png files starting at 0.
inline std::size_t count_frames(const std::filesystem::path& dir) {
  std::size_t n = 0;
  while (std::filesystem::exists(dir / frame_filename(n))) ++n;
  return n;
}

struct FixationThumbnails {
  long long fixation_id = 0;
  std::vector<Thumbnail> thumbnails;
  std::size_t skipped = 0;  // frames whose gaze position fell outside the frame
};

/// Crops one thumbnail per selected frame, centered at the in-fixation gaze sample nearest
/// to the frame timestamp (event centroid when no sample qualifies).
inline std::vector<FixationThumbnails> fixation_thumbnails(const std::filesystem::path& frames_dir,
                                                           const std::vector<GazeSample>& samples,
                                                           const std::vector<FixationEvent>& events,
                                                           const FrameIndex& idx, int side) {
  std::vector<FixationThumbnails> out;
  for (const auto& ev : events) {
    FixationThumbnails group{ev.id, {}, 0};
    for (const auto fi : frames_for_fixation(ev, idx)) {
      const auto path = frames_dir / frame_filename(fi);
      if (!std::filesystem::exists(path)) throw Error("missing frame file '" + path.string() + "'");
      const Image frame = read_png(path);
      PixelCoord c{ev.cx_px, ev.cy_px};
      if (const auto s = nearest_sample(samples, idx.timestamp_ms(fi), ev.start_ms, ev.end_ms))
        c = {s->x_px, s->y_px};
      const auto rx = std::lround(c.x), ry = std::lround(c.y);
      if (rx < 0 || ry < 0 || rx >= frame.width || ry >= frame.height) {
        ++group.skipped;
        continue;
      }
      auto th = crop_thumbnail(frame, c, side);
      th.fixation_id = ev.id;
      th.frame_index = fi;
      group.thumbnails.push_back(std::move(th));
    }
    out.push_back(std::move(group));
  }
  return out;
}

}  // namespace voi::gaze
