#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "voi/geometry.hpp"

namespace voi {

struct Rgb {
  double r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Checker {
  double scale = 0.1;  // edge length of one checker cell in meters
  Rgb second;
};

struct Material {
  std::string id;
  Rgb albedo{0.7, 0.7, 0.7};
  std::optional<Checker> checker;

  /// Albedo at a world-space surface point.
  Rgb albedo_at(const Vec3& p) const {
    if (!checker) return albedo;
    const auto cell = [&](double v) { return static_cast<long long>(std::floor(v / checker->scale)); };
    const long long parity = cell(p.x) + cell(p.y) + cell(p.z);
    return (parity % 2 == 0) ? albedo : checker->second;
  }
};

struct Voi {
  std::string id;
  int class_index = 0;
  Shape shape;
  std::size_t material = 0;  // index into Scene::materials
};

enum class BackgroundKind { object, environment };

struct BackgroundPrimitive {
  BackgroundKind kind = BackgroundKind::environment;
  Shape shape;
  std::size_t material = 0;
};

struct DirectionalLight {
  Vec3 direction{0.0, -0.5144957554275265, 0.8574929257125441};  // unit, from surface toward light
  double intensity = 1.0;
};

/// Ordered class names: VOIs 0..K-1, then "object-no-VOI" (K) and "environment" (K+1).
struct ClassCatalog {
  std::vector<std::string> names;
  std::size_t voi_count = 0;

  static constexpr std::string_view kObjectDefault = "object-no-VOI";
  static constexpr std::string_view kEnvironment = "environment";

  static ClassCatalog from_voi_names(std::vector<std::string> voi_names) {
    ClassCatalog c;
    c.voi_count = voi_names.size();
    c.names = std::move(voi_names);
    c.names.emplace_back(kObjectDefault);
    c.names.emplace_back(kEnvironment);
    return c;
  }

  std::size_t size() const { return names.size(); }
  int object_default() const { return static_cast<int>(voi_count); }
  int environment() const { return static_cast<int>(voi_count + 1); }
  bool is_default(int cls) const { return cls >= static_cast<int>(voi_count); }
  bool valid(int cls) const { return cls >= 0 && cls < static_cast<int>(names.size()); }
  const std::string& name(int cls) const {
    if (!valid(cls)) throw Error("class index " + std::to_string(cls) + " out of range");
    return names[static_cast<std::size_t>(cls)];
  }
  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    throw Error("unknown class '" + std::string(name) + "'");
  }
  bool operator==(const ClassCatalog&) const = default;
};

struct Scene {
  std::vector<Material> materials;
  std::vector<Voi> vois;
  std::vector<BackgroundPrimitive> background;
  DirectionalLight light;
  double ambient = 0.3;
  Rgb sky{0.55, 0.62, 0.70};  // color of rays that hit nothing

  ClassCatalog catalog() const {
    std::vector<std::string> names;
    for (const auto& v : vois) names.push_back(v.id);
    return ClassCatalog::from_voi_names(std::move(names));
  }
  int voi_count() const { return static_cast<int>(vois.size()); }
  std::size_t primitive_count() const { return vois.size() + background.size(); }

  /// Primitive i in the deterministic order used for tie-breaking: VOIs first, then background.
  const Shape& primitive_shape(std::size_t i) const {
    return i < vois.size() ? vois[i].shape : background[i - vois.size()].shape;
  }
  const Material& primitive_material(std::size_t i) const {
    return materials[i < vois.size() ? vois[i].material : background[i - vois.size()].material];
  }
  int primitive_class(std::size_t i) const {
    if (i < vois.size()) return vois[i].class_index;
    return background[i - vois.size()].kind == BackgroundKind::object ? voi_count()
                                                                      : voi_count() + 1;
  }
};

struct SceneHit {
  double t = 0;
  int class_index = 0;
  std::size_t primitive = 0;
  Vec3 point;
  Vec3 normal;
};

/// Nearest hit over all primitives with t > kHitEpsilon; equal t keeps the lower primitive index.
inline std::optional<SceneHit> intersect_ray(const Scene& scene, const Ray& ray,
                                             double t_max = std::numeric_limits<double>::infinity()) {
  std::optional<SceneHit> best;
  const std::size_t n = scene.primitive_count();
  for (std::size_t i = 0; i < n; ++i) {
    const auto h = intersect(scene.primitive_shape(i), ray);
    if (!h || h->t >= t_max) continue;
    if (!best || h->t < best->t) best = SceneHit{h->t, scene.primitive_class(i), i, {}, h->normal};
  }
  if (best) best->point = ray.at(best->t);
  return best;
}

/// Class seen along a ray; a miss is the environment default.
inline int class_along_ray(const Scene& scene, const Ray& ray) {
  const auto hit = intersect_ray(scene, ray);
  return hit ? hit->class_index : scene.voi_count() + 1;
}

/// Axis-aligned bounds of the VOIs and object background (environment excluded).
inline std::pair<Vec3, Vec3> object_bounds(const Scene& scene) {
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  bool any = false;
  auto grow = [&](const Shape& s) {
    const auto [a, b] = bounds(s);
    lo = {std::min(lo.x, a.x), std::min(lo.y, a.y), std::min(lo.z, a.z)};
    hi = {std::max(hi.x, b.x), std::max(hi.y, b.y), std::max(hi.z, b.z)};
    any = true;
  };
  for (const auto& v : scene.vois) grow(v.shape);
  for (const auto& b : scene.background)
    if (b.kind == BackgroundKind::object) grow(b.shape);
  if (!any)
    for (const auto& b : scene.background) grow(b.shape);
  if (!any) return {{0, 0, 0}, {0, 0, 0}};
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// Scene description format (see docs/scene-format.md)

namespace detail {

struct PendingRef {
  std::string material;
  std::size_t line;
};

inline Shape parse_shape(const std::vector<std::string>& tok, std::size_t first, std::size_t end,
                         std::size_t line) {
  const std::string& kind = tok[first];
  std::vector<double> v;
  for (std::size_t i = first + 1; i < end; ++i) v.push_back(parse_real(tok[i], line));
  if (kind == "box") {
    if (v.size() != 6 && v.size() != 10)
      throw ParseError(line, "box expects 6 or 10 numbers, got " + std::to_string(v.size()));
    Box b{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, Quat::identity()};
    if (!(v[3] > 0 && v[4] > 0 && v[5] > 0)) throw ParseError(line, "non-positive dimension");
    if (v.size() == 10) {
      const Quat q{v[6], v[7], v[8], v[9]};
      if (!(q.norm() > 0)) throw ParseError(line, "zero quaternion");
      b.orientation = q.normalized();
    }
    return b;
  }
  if (kind == "cyl") {
    if (v.size() != 8)
      throw ParseError(line, "cyl expects 8 numbers, got " + std::to_string(v.size()));
    const Vec3 axis{v[3], v[4], v[5]};
    if (!(norm(axis) > 0)) throw ParseError(line, "cylinder axis must be non-zero");
    if (!(v[6] > 0 && v[7] > 0)) throw ParseError(line, "non-positive dimension");
    return Cylinder{{v[0], v[1], v[2]}, normalize(axis), v[6], v[7]};
  }
  throw ParseError(line, "unknown shape kind '" + kind + "'");
}

inline Rgb parse_rgb(const std::vector<std::string>& tok, std::size_t at, std::size_t line) {
  Rgb c{parse_real(tok[at], line), parse_real(tok[at + 1], line), parse_real(tok[at + 2], line)};
  for (double ch : {c.r, c.g, c.b})
    if (ch < 0 || ch > 1) throw ParseError(line, "color channel outside [0,1]");
  return c;
}

}  // namespace detail

/// Parses the line-oriented scene description. Errors carry the offending line number.
inline Scene parse_scene(std::string_view text) {
  Scene scene;
  std::vector<detail::PendingRef> voi_refs, bg_refs;
  std::set<std::string> voi_ids, material_ids;
  bool have_light = false, have_ambient = false, have_sky = false;

  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto tok = split_ws(raw);
    if (tok.empty()) continue;

    // optional trailing "mat <id>"
    std::string mat_ref;
    std::size_t end = tok.size();
    if (end >= 2 && tok[end - 2] == "mat") {
      mat_ref = tok[end - 1];
      end -= 2;
    }
    const std::string& kw = tok[0];
    if (kw == "voi") {
      if (end < 3) throw ParseError(line_no, "voi expects an id and a shape");
      const std::string& id = tok[1];
      if (!voi_ids.insert(id).second) throw ParseError(line_no, "duplicate id '" + id + "'");
      Voi v;
      v.id = id;
      v.class_index = static_cast<int>(scene.vois.size());
      v.shape = detail::parse_shape(tok, 2, end, line_no);
      scene.vois.push_back(std::move(v));
      voi_refs.push_back({mat_ref, line_no});
    } else if (kw == "bg") {
      if (end < 3) throw ParseError(line_no, "bg expects a kind and a shape");
      BackgroundPrimitive b;
      if (tok[1] == "default") b.kind = BackgroundKind::object;
      else if (tok[1] == "env") b.kind = BackgroundKind::environment;
      else throw ParseError(line_no, "bg kind must be 'default' or 'env', got '" + tok[1] + "'");
      b.shape = detail::parse_shape(tok, 2, end, line_no);
      scene.background.push_back(std::move(b));
      bg_refs.push_back({mat_ref, line_no});
    } else if (kw == "light") {
      if (!mat_ref.empty() || end != 5) throw ParseError(line_no, "light expects dx dy dz intensity");
      if (have_light) throw ParseError(line_no, "duplicate light");
      const Vec3 d{parse_real(tok[1], line_no), parse_real(tok[2], line_no), parse_real(tok[3], line_no)};
      if (!(norm(d) > 0)) throw ParseError(line_no, "light direction must be non-zero");
      const double intensity = parse_real(tok[4], line_no);
      if (intensity < 0) throw ParseError(line_no, "light intensity must be non-negative");
      scene.light = {normalize(d), intensity};
      have_light = true;
    } else if (kw == "ambient") {
      if (!mat_ref.empty() || end != 2) throw ParseError(line_no, "ambient expects one value");
      if (have_ambient) throw ParseError(line_no, "duplicate ambient");
      scene.ambient = parse_real(tok[1], line_no);
      if (scene.ambient < 0 || scene.ambient > 1) throw ParseError(line_no, "ambient outside [0,1]");
      have_ambient = true;
    } else if (kw == "sky") {
      if (!mat_ref.empty() || end != 4) throw ParseError(line_no, "sky expects r g b");
      if (have_sky) throw ParseError(line_no, "duplicate sky");
      scene.sky = detail::parse_rgb(tok, 1, line_no);
      have_sky = true;
    } else if (kw == "material") {
      if (!mat_ref.empty() || (end != 5 && end != 10))
        throw ParseError(line_no, "material expects id r g b [checker scale r2 g2 b2]");
      const std::string& id = tok[1];
      if (!material_ids.insert(id).second)
        throw ParseError(line_no, "duplicate id '" + id + "'");
      Material m;
      m.id = id;
      m.albedo = detail::parse_rgb(tok, 2, line_no);
      if (end == 10) {
        if (tok[5] != "checker") throw ParseError(line_no, "expected 'checker', got '" + tok[5] + "'");
        const double scale = parse_real(tok[6], line_no);
        if (!(scale > 0)) throw ParseError(line_no, "non-positive dimension");
        m.checker = Checker{scale, detail::parse_rgb(tok, 7, line_no)};
      }
      scene.materials.push_back(std::move(m));
    } else {
      throw ParseError(line_no, "unknown keyword '" + kw + "'");
    }
  }

  // Primitives without a material share an implicit grey one appended last.
  std::optional<std::size_t> default_material;
  auto resolve = [&](const detail::PendingRef& ref) -> std::size_t {
    if (ref.material.empty()) {
      if (!default_material) {
        default_material = scene.materials.size();
        scene.materials.push_back(Material{"__default", {0.7, 0.7, 0.7}, std::nullopt});
      }
      return *default_material;
    }
    for (std::size_t i = 0; i < scene.materials.size(); ++i)
      if (scene.materials[i].id == ref.material) return i;
    throw ParseError(ref.line, "unknown material '" + ref.material + "'");
  };
  for (std::size_t i = 0; i < scene.vois.size(); ++i) scene.vois[i].material = resolve(voi_refs[i]);
  for (std::size_t i = 0; i < scene.background.size(); ++i)
    scene.background[i].material = resolve(bg_refs[i]);
  return scene;
}

namespace detail {

inline std::string shape_text(const Shape& s) {
  if (const auto* b = std::get_if<Box>(&s)) {
    std::string out = "box " + fmt_real(b->center.x) + " " + fmt_real(b->center.y) + " " +
                      fmt_real(b->center.z) + " " + fmt_real(b->half_extents.x) + " " +
                      fmt_real(b->half_extents.y) + " " + fmt_real(b->half_extents.z);
    const Quat& q = b->orientation;
    if (!(q.w == 1 && q.x == 0 && q.y == 0 && q.z == 0))
      out += " " + fmt_real(q.w) + " " + fmt_real(q.x) + " " + fmt_real(q.y) + " " + fmt_real(q.z);
    return out;
  }
  const auto& c = std::get<Cylinder>(s);
  return "cyl " + fmt_real(c.base_center.x) + " " + fmt_real(c.base_center.y) + " " +
         fmt_real(c.base_center.z) + " " + fmt_real(c.axis.x) + " " + fmt_real(c.axis.y) + " " +
         fmt_real(c.axis.z) + " " + fmt_real(c.radius) + " " + fmt_real(c.height);
}

inline std::string rgb_text(const Rgb& c) {
  return fmt_real(c.r) + " " + fmt_real(c.g) + " " + fmt_real(c.b);
}

}  // namespace detail

/// Serializes a scene back into the description format; parse_scene(to_text(s)) reproduces s.
inline std::string to_text(const Scene& s) {
  std::string out;
  for (const auto& m : s.materials) {
    if (m.id == "__default") continue;
    out += "material " + m.id + " " + detail::rgb_text(m.albedo);
    if (m.checker)
      out += " checker " + fmt_real(m.checker->scale) + " " + detail::rgb_text(m.checker->second);
    out += "\n";
  }
  out += "light " + fmt_real(s.light.direction.x) + " " + fmt_real(s.light.direction.y) + " " +
         fmt_real(s.light.direction.z) + " " + fmt_real(s.light.intensity) + "\n";
  out += "ambient " + fmt_real(s.ambient) + "\n";
  out += "sky " + detail::rgb_text(s.sky) + "\n";
  auto mat_suffix = [&](std::size_t m) {
    return s.materials[m].id == "__default" ? std::string() : " mat " + s.materials[m].id;
  };
  for (const auto& v : s.vois) out += "voi " + v.id + " " + detail::shape_text(v.shape) + mat_suffix(v.material) + "\n";
  for (const auto& b : s.background)
    out += std::string("bg ") + (b.kind == BackgroundKind::object ? "default " : "env ") +
           detail::shape_text(b.shape) + mat_suffix(b.material) + "\n";
  return out;
}

}  // namespace voi
