#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "voi/gaze.hpp"
#include "voi/geometry.hpp"
#include "voi/image.hpp"
#include "voi/scene.hpp"

namespace voi::sim {

// ---------------------------------------------------------------------------
// Shading

/// Lambert shading with one hard shadow ray; misses take the scene sky color.
inline Rgb shade(const Scene& scene, const Ray& ray) {
  const auto hit = intersect_ray(scene, ray);
  if (!hit) return scene.sky;
  const Vec3& l = scene.light.direction;
  double diffuse = std::max(0.0, dot(hit->normal, l)) * scene.light.intensity;
  if (diffuse > 0) {
    const Ray shadow{hit->point + 1e-6 * hit->normal, l};
    if (intersect_ray(scene, shadow)) diffuse = 0;
  }
  const double k = std::min(1.0, scene.ambient + (1.0 - scene.ambient) * diffuse);
  const Rgb a = scene.primitive_material(hit->primitive).albedo_at(hit->point - 1e-6 * hit->normal);
  return {a.r * k, a.g * k, a.b * k};
}

/// Renders the window [x0, x0+w) x [y0, y0+h) of the full camera frame. Each pixel is shaded
/// independently, so a region equals the same crop of a full render.
inline Image render_region(const Scene& scene, const Pose& pose, const CameraIntrinsics& k, int x0,
                           int y0, int w, int h) {
  validate(pose);
  validate(k);
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Ray r = ray_for_pixel(pose, k, {double(x0 + x), double(y0 + y)});
      img.set(x, y, Image::to_bytes(shade(scene, r)));
    }
  return img;
}

inline Image render_frame(const Scene& scene, const Pose& pose, const CameraIntrinsics& k) {
  return render_region(scene, pose, k, 0, 0, k.width_px, k.height_px);
}

// ---------------------------------------------------------------------------
// Fixation marker

struct MarkerStyle {
  int radius_px = 4;
  Rgb fill{1.0, 0.85, 0.0};
  Rgb ring{0.1, 0.1, 0.1};
  int ring_width_px = 1;
};

/// Disc (distance <= radius) in fill color, ring (radius < distance < radius + ring width) in
/// ring color. `cx, cy` may lie outside `img` when drawing into a crop; callers check bounds.
inline void draw_marker(Image& img, int cx, int cy, const MarkerStyle& style) {
  if (style.radius_px < 2) throw Error("marker radius must be at least 2 px");
  const int outer = style.radius_px + std::max(0, style.ring_width_px);
  const auto fill = Image::to_bytes(style.fill);
  const auto ring = Image::to_bytes(style.ring);
  const long r2 = long(style.radius_px) * style.radius_px;
  const long o2 = long(outer) * outer;
  for (int y = cy - outer; y <= cy + outer; ++y)
    for (int x = cx - outer; x <= cx + outer; ++x) {
      if (!img.in_bounds(x, y)) continue;
      const long d2 = long(x - cx) * (x - cx) + long(y - cy) * (y - cy);
      if (d2 <= r2) img.set(x, y, fill);
      else if (d2 < o2) img.set(x, y, ring);
    }
}

inline Image overlay_marker(Image image, PixelCoord px, const MarkerStyle& style) {
  const auto cx = static_cast<int>(std::lround(px.x));
  const auto cy = static_cast<int>(std::lround(px.y));
  if (!image.in_bounds(cx, cy)) throw Error("marker center outside image");
  draw_marker(image, cx, cy, style);
  return image;
}

// ---------------------------------------------------------------------------
// Marker sweep

struct MarkerPathConfig {
  double step_m = 0.02;
  bool serpentine = true;
};

struct PathPoint {
  Vec3 point;
  Vec3 normal;
  PixelCoord px;  // exact projection
};

struct MarkerPath {
  std::vector<PathPoint> points;
  std::size_t candidates = 0;
  std::size_t border_rejected = 0;  // visible, but the rounded marker pixel sees another class
  std::string warning;
};

namespace detail {

inline int grid_count(double length, double step) {
  return static_cast<int>(std::floor(length / step + 1e-9)) + 1;
}

inline double grid_pos(int i, int n, double step) { return (i - (n - 1) / 2.0) * step; }

/// Serpentine (boustrophedon) grid over a rectangle spanned by u, v around `center`.
inline void rect_patch(const Vec3& center, const Vec3& u, double half_u, const Vec3& v, double half_v,
                       const Vec3& normal, const MarkerPathConfig& cfg, std::vector<PathPoint>& out) {
  const int nu = grid_count(2 * half_u, cfg.step_m), nv = grid_count(2 * half_v, cfg.step_m);
  for (int j = 0; j < nv; ++j)
    for (int ii = 0; ii < nu; ++ii) {
      const int i = (cfg.serpentine && (j % 2 == 1)) ? nu - 1 - ii : ii;
      out.push_back({center + grid_pos(i, nu, cfg.step_m) * u + grid_pos(j, nv, cfg.step_m) * v,
                     normal, {}});
    }
}

inline Vec3 any_perpendicular(const Vec3& a) {
  const Vec3 t = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalize(cross(a, t));
}

inline void surface_points(const Shape& shape, const MarkerPathConfig& cfg, std::vector<PathPoint>& out) {
  if (const auto* b = std::get_if<Box>(&shape)) {
    const Vec3 ax[3] = {b->orientation.rotate({1, 0, 0}), b->orientation.rotate({0, 1, 0}),
                        b->orientation.rotate({0, 0, 1})};
    for (int a = 0; a < 3; ++a)
      for (double s : {-1.0, 1.0}) {
        const int ua = (a + 1) % 3, va = (a + 2) % 3;
        rect_patch(b->center + (s * b->half_extents[a]) * ax[a], ax[ua], b->half_extents[ua], ax[va],
                   b->half_extents[va], s * ax[a], cfg, out);
      }
    return;
  }
  const auto& c = std::get<Cylinder>(shape);
  const Vec3 u = any_perpendicular(c.axis);
  const Vec3 v = cross(c.axis, u);
  const int n_ang = std::max(3, static_cast<int>(std::ceil(2 * std::numbers::pi * c.radius / cfg.step_m - 1e-9)));
  const int n_h = grid_count(c.height, cfg.step_m);
  for (int j = 0; j < n_h; ++j) {
    const double h = c.height / 2 + grid_pos(j, n_h, cfg.step_m);
    for (int ii = 0; ii < n_ang; ++ii) {
      const int i = (cfg.serpentine && (j % 2 == 1)) ? n_ang - 1 - ii : ii;
      const double phi = 2 * std::numbers::pi * i / n_ang;
      const Vec3 radial = std::cos(phi) * u + std::sin(phi) * v;
      out.push_back({c.base_center + h * c.axis + c.radius * radial, radial, {}});
    }
  }
  for (const auto& [h, n] : {std::pair{0.0, -c.axis}, std::pair{c.height, c.axis}}) {
    std::vector<PathPoint> cap;
    rect_patch(c.base_center + h * c.axis, u, c.radius, v, c.radius, n, cfg, cap);
    const Vec3 center = c.base_center + h * c.axis;
    for (const auto& p : cap) {
      const Vec3 d = p.point - center;
      if (dot(d, d) <= c.radius * c.radius * (1 + 1e-12)) out.push_back(p);
    }
  }
}

}  // namespace detail

/// Surface shapes carrying a class: the VOI itself, or all background primitives of a default.
inline std::vector<const Shape*> class_shapes(const Scene& scene, int cls) {
  std::vector<const Shape*> shapes;
  if (cls < 0 || cls > scene.voi_count() + 1) throw Error("class " + std::to_string(cls) + " does not exist");
  if (cls < scene.voi_count()) {
    for (const auto& v : scene.vois)
      if (v.class_index == cls) shapes.push_back(&v.shape);
  } else {
    const auto kind = cls == scene.voi_count() ? BackgroundKind::object : BackgroundKind::environment;
    for (const auto& b : scene.background)
      if (b.kind == kind) shapes.push_back(&b.shape);
  }
  return shapes;
}

/// Serpentine sweep over every surface of the class, keeping points the camera sees directly.
inline MarkerPath generate_marker_path(const Scene& scene, int cls, const Pose& pose,
                                       const CameraIntrinsics& k, const MarkerPathConfig& cfg) {
  if (!(cfg.step_m > 0)) throw Error("marker path step must be positive");
  MarkerPath path;
  std::vector<PathPoint> candidates;
  for (const Shape* s : class_shapes(scene, cls)) detail::surface_points(*s, cfg, candidates);
  path.candidates = candidates.size();
  for (auto& p : candidates) {
    if (dot(p.normal, pose.position - p.point) <= 0) continue;
    const auto px = project(p.point, pose, k);
    if (!px || !k.contains(*px)) continue;
    const Vec3 to_point = p.point - pose.position;
    const auto hit = intersect_ray(scene, Ray{pose.position, normalize(to_point)});
    if (!hit || norm(hit->point - p.point) > 1e-4) continue;
    const PixelCoord rounded{std::round(px->x), std::round(px->y)};
    if (!k.contains(rounded) || class_along_ray(scene, ray_for_pixel(pose, k, rounded)) != cls) {
      ++path.border_rejected;
      continue;
    }
    p.px = *px;
    path.points.push_back(p);
  }
  if (path.points.empty())
    path.warning = "class " + std::to_string(cls) + " has no visible surface points from this view";
  return path;
}

// ---------------------------------------------------------------------------
// Camera sampling

struct CameraSamplingPlan {
  double azimuth_min_deg = -45;
  double azimuth_max_deg = 45;
  double azimuth_step_deg = 15;
  std::vector<double> eye_heights_m{1.535, 1.635, 1.755};
  std::vector<double> extra_heights_m;
  double distance_m = 1.0;
  std::vector<double> roll_deg{0.0};
  double aim_jitter_deg = 5.0;
  std::uint64_t seed = 0;
  CameraIntrinsics intrinsics;

  std::vector<double> azimuths() const {
    std::vector<double> out;
    if (!(azimuth_step_deg > 0)) {
      if (azimuth_min_deg == azimuth_max_deg) out.push_back(azimuth_min_deg);
      return out;
    }
    const int n = static_cast<int>(std::floor((azimuth_max_deg - azimuth_min_deg) / azimuth_step_deg + 1e-9));
    for (int i = 0; i <= n; ++i) out.push_back(azimuth_min_deg + i * azimuth_step_deg);
    return out;
  }
  std::vector<double> heights() const {
    std::vector<double> h = eye_heights_m;
    h.insert(h.end(), extra_heights_m.begin(), extra_heights_m.end());
    return h;
  }
};

inline void validate(const CameraSamplingPlan& p) {
  if (p.azimuth_min_deg < -180 || p.azimuth_max_deg > 180 || p.azimuth_min_deg > p.azimuth_max_deg)
    throw Error("azimuth range must lie within [-180, 180]");
  if (!(p.distance_m > 0)) throw Error("camera distance must be positive");
  for (double h : p.heights())
    if (!(h > 0)) throw Error("camera heights must be positive");
  if (p.heights().empty()) throw Error("camera plan has no heights");
  if (p.roll_deg.empty()) throw Error("camera plan has no roll angles");
  if (p.aim_jitter_deg < 0) throw Error("aim jitter must be non-negative");
  validate(p.intrinsics);
}

struct View {
  Pose pose;
  CameraIntrinsics intrinsics;
  Vec3 aim;
};

/// azimuths x heights x rolls, each at `distance_m` from the object-bounds center, aimed at it
/// with deterministic per-view jitter. Azimuth 0 looks along +y; heights are world z.
inline std::vector<View> sample_cameras(const CameraSamplingPlan& plan, const Scene& scene) {
  validate(plan);
  const auto az = plan.azimuths();
  if (az.empty()) throw Error("camera plan has an empty azimuth set");
  const auto [lo, hi] = object_bounds(scene);
  const Vec3 aim = 0.5 * (lo + hi);
  const double deg = std::numbers::pi / 180.0;
  std::vector<View> views;
  std::uint64_t view_index = 0;
  for (double a : az)
    for (double h : plan.heights())
      for (double roll : plan.roll_deg) {
        const double dz = h - aim.z;
        if (std::abs(dz) >= plan.distance_m)
          throw Error("camera height " + fmt_real(h) + " m cannot be placed at distance " +
                      fmt_real(plan.distance_m) + " m from the aim point");
        const double r = std::sqrt(plan.distance_m * plan.distance_m - dz * dz);
        const Vec3 eye{aim.x + r * std::sin(a * deg), aim.y - r * std::cos(a * deg), h};
        Pose pose = look_at(eye, aim);
        auto rng = Rng::split(plan.seed, view_index++);
        const double yaw = rng.uniform(-plan.aim_jitter_deg, plan.aim_jitter_deg) * deg;
        const double pitch = rng.uniform(-plan.aim_jitter_deg, plan.aim_jitter_deg) * deg;
        pose.orientation = (pose.orientation * Quat::from_axis_angle({0, 0, 1}, roll * deg) *
                            Quat::from_axis_angle({0, 1, 0}, yaw) *
                            Quat::from_axis_angle({1, 0, 0}, pitch))
                               .normalized();
        views.push_back({pose, plan.intrinsics, aim});
      }
  return views;
}

// ---------------------------------------------------------------------------
// Dataset manifest

struct ManifestRow {
  std::string path;  // relative to the manifest directory
  int class_index = 0;
  PixelCoord px;     // marker pixel in the full frame
  Pose camera;
  Vec3 marker;       // marker point in world coordinates
};

struct DatasetManifest {
  int classes = 0;
  std::uint64_t seed = 0;
  std::vector<int> underrepresented;
  std::vector<std::string> class_names;  // optional "#catalog" line
  std::string provenance;  // "#tool ..." line, if any
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // directory the relative paths resolve against

  std::filesystem::path image_path(const ManifestRow& r) const { return base_dir / r.path; }
};

inline constexpr std::string_view kManifestColumns =
    "path,class_index,px,py,cam_qw,cam_qx,cam_qy,cam_qz,cam_x,cam_y,cam_z,mx,my,mz";

inline std::string manifest_text(const DatasetManifest& m) {
  std::string out = "#voi-manifest v1 classes=" + std::to_string(m.classes) + " seed=" + std::to_string(m.seed) + "\n";
  if (!m.provenance.empty()) out += m.provenance + "\n";
  if (!m.class_names.empty()) {
    out += "#catalog ";
    for (std::size_t i = 0; i < m.class_names.size(); ++i) out += (i ? "," : "") + m.class_names[i];
    out += "\n";
  }
  if (!m.underrepresented.empty()) {
    out += "#underrepresented ";
    for (std::size_t i = 0; i < m.underrepresented.size(); ++i)
      out += (i ? "," : "") + std::to_string(m.underrepresented[i]);
    out += "\n";
  }
  out += std::string(kManifestColumns) + "\n";
  for (const auto& r : m.rows) {
    const Quat& q = r.camera.orientation;
    const Vec3& c = r.camera.position;
    out += r.path + "," + std::to_string(r.class_index) + "," + fmt_real(r.px.x) + "," + fmt_real(r.px.y) +
           "," + fmt_real(q.w) + "," + fmt_real(q.x) + "," + fmt_real(q.y) + "," + fmt_real(q.z) + "," +
           fmt_real(c.x) + "," + fmt_real(c.y) + "," + fmt_real(c.z) + "," + fmt_real(r.marker.x) + "," +
           fmt_real(r.marker.y) + "," + fmt_real(r.marker.z) + "\n";
  }
  return out;
}

inline DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir = {}) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  const auto t = parse_csv(text);
  bool have_header = false;
  for (const auto& c : t.comments) {
    if (c.rfind("#voi-manifest", 0) == 0) {
      const auto tok = split_ws(c);
      if (tok.size() < 2 || tok[1] != "v1") throw ParseError(1, "unsupported manifest version");
      for (const auto& kv : tok) {
        if (kv.rfind("classes=", 0) == 0) m.classes = static_cast<int>(parse_int(kv.substr(8), 1));
        if (kv.rfind("seed=", 0) == 0) m.seed = static_cast<std::uint64_t>(parse_int(kv.substr(5), 1));
      }
      have_header = true;
    } else if (c.rfind("#underrepresented", 0) == 0) {
      const auto tok = split_ws(c);
      if (tok.size() == 2)
        for (const auto& v : split(tok[1], ',')) m.underrepresented.push_back(static_cast<int>(parse_int(v, 1)));
    } else if (c.rfind("#tool", 0) == 0) {
      m.provenance = c;
    } else if (c.rfind("#catalog ", 0) == 0) {
      m.class_names = split(trim(c.substr(9)), ',');
    }
  }
  if (!have_header) throw ParseError(1, "missing '#voi-manifest v1' header");
  if (!m.class_names.empty() && int(m.class_names.size()) != m.classes)
    throw ParseError(1, "catalog names do not match classes=" + std::to_string(m.classes));
  const std::size_t col[14] = {t.column("path"),   t.column("class_index"), t.column("px"),
                               t.column("py"),     t.column("cam_qw"),      t.column("cam_qx"),
                               t.column("cam_qy"), t.column("cam_qz"),      t.column("cam_x"),
                               t.column("cam_y"),  t.column("cam_z"),       t.column("mx"),
                               t.column("my"),     t.column("mz")};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const auto ln = t.row_lines[r];
    auto num = [&](int i) { return parse_real(f[col[i]], ln); };
    ManifestRow row;
    row.path = f[col[0]];
    row.class_index = static_cast<int>(parse_int(f[col[1]], ln));
    if (row.class_index < 0 || row.class_index >= m.classes)
      throw ParseError(ln, "class index " + std::to_string(row.class_index) + " outside catalog");
    row.px = {num(2), num(3)};
    row.camera.orientation = {num(4), num(5), num(6), num(7)};
    row.camera.position = {num(8), num(9), num(10)};
    row.marker = {num(11), num(12), num(13)};
    m.rows.push_back(std::move(row));
  }
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Dataset generation

struct DatasetConfig {
  int thumbnail_side = 64;
  bool include_defaults = true;
  std::size_t max_points_per_class_view = 0;  // 0 = keep every visible point
  bool persist_full_frames = false;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string manifest_name = "manifest.csv";
  std::string provenance;  // optional "#tool ..." line recorded in the manifest
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write results into
/// per-index slots so output order never depends on completion order.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 0; w < count; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::string image_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%07zu.png", index);
  return buf;
}

/// Thumbnail around a marker placed at `marker_px` (rounded) in the given view.
inline Image render_marker_thumbnail(const Scene& scene, const Pose& pose, const CameraIntrinsics& k,
                                     PixelCoord marker_px, int side, const MarkerStyle& style) {
  const auto w = gaze::crop_window(k.width_px, k.height_px, marker_px, side);
  Image img = render_region(scene, pose, k, w.x0, w.y0, side, side);
  draw_marker(img, static_cast<int>(std::lround(marker_px.x)) - w.x0,
              static_cast<int>(std::lround(marker_px.y)) - w.y0, style);
  return img;
}

/// Evenly spaced deterministic subset of size m from n items.
inline std::vector<std::size_t> even_subset(std::size_t n, std::size_t m) {
  std::vector<std::size_t> idx;
  if (m == 0 || m >= n) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t j = 0; j < m; ++j) idx.push_back(j * n / m);
  return idx;
}

/// Renders one labeled thumbnail per visible marker-path point for every view and class and
/// writes the images plus manifest into out_dir.
inline DatasetManifest generate_dataset(const Scene& scene, const std::vector<View>& views,
                                        const MarkerPathConfig& pathcfg, const MarkerStyle& style,
                                        const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  {
    const auto probe = out_dir / ".voi-write-probe";
    std::ofstream test(probe);
    if (!test) throw Error("output directory '" + out_dir.string() + "' is not writable");
    test.close();
    std::filesystem::remove(probe, ec);
  }
  if (views.empty()) throw Error("camera plan produced no views");
  for (const auto& v : views) {
    const auto& a = v.intrinsics;
    const auto& b = views.front().intrinsics;
    if (a.width_px != b.width_px || a.height_px != b.height_px || a.focal_px != b.focal_px || a.cx != b.cx ||
        a.cy != b.cy)
      throw Error("all views of one dataset must share camera intrinsics");
  }
  const int n_classes = scene.voi_count() + 2;
  const int last_class = cfg.include_defaults ? n_classes : scene.voi_count();

  struct PathJob { std::size_t view; int cls; };
  std::vector<PathJob> path_jobs;
  for (std::size_t v = 0; v < views.size(); ++v)
    for (int c = 0; c < last_class; ++c) path_jobs.push_back({v, c});
  std::vector<MarkerPath> paths(path_jobs.size());
  parallel_for(path_jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto& view = views[path_jobs[i].view];
    paths[i] = generate_marker_path(scene, path_jobs[i].cls, view.pose, view.intrinsics, pathcfg);
  });

  DatasetManifest m;
  m.classes = n_classes;
  m.seed = cfg.seed;
  m.provenance = cfg.provenance;
  m.class_names = scene.catalog().names;
  m.base_dir = out_dir;
  std::vector<std::size_t> per_class(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < path_jobs.size(); ++i) {
    const auto& view = views[path_jobs[i].view];
    for (const auto j : even_subset(paths[i].points.size(), cfg.max_points_per_class_view)) {
      const auto& p = paths[i].points[j];
      ManifestRow row;
      row.path = image_filename(m.rows.size());
      row.class_index = path_jobs[i].cls;
      row.px = {std::round(p.px.x), std::round(p.px.y)};
      row.camera = view.pose;
      row.marker = p.point;
      m.rows.push_back(std::move(row));
      ++per_class[static_cast<std::size_t>(path_jobs[i].cls)];
    }
  }
  for (int c = 0; c < last_class; ++c)
    if (per_class[static_cast<std::size_t>(c)] == 0) m.underrepresented.push_back(c);

  parallel_for(m.rows.size(), cfg.workers, [&](std::size_t i) {
    const auto& row = m.rows[i];
    const CameraIntrinsics& k = views.front().intrinsics;
    write_png(out_dir / row.path,
              render_marker_thumbnail(scene, row.camera, k, row.px, cfg.thumbnail_side, style));
    if (cfg.persist_full_frames) {
      Image full = render_frame(scene, row.camera, k);
      draw_marker(full, static_cast<int>(row.px.x), static_cast<int>(row.px.y), style);
      write_png(out_dir / ("frame_" + row.path), full);
    }
  });
  write_file(out_dir / cfg.manifest_name, manifest_text(m));
  return m;
}

}  // namespace voi::sim
