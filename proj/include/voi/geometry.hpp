#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <variant>

#include "voi/common.hpp"

namespace voi {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3& v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw Error("cannot normalize a zero vector");
  if (std::abs(n - 1.0) < 1e-15) return v;  // keeps text round trips bit-stable
  return v / n;
}
inline bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Rotation quaternion (w, x, y, z); rotate() assumes unit norm.
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  static Quat identity() { return {}; }
  static Quat from_axis_angle(const Vec3& axis, double radians) {
    const Vec3 a = normalize(axis);
    const double s = std::sin(radians / 2);
    return {std::cos(radians / 2), a.x * s, a.y * s, a.z * s};
  }
  /// Columns are the images of the x, y, z basis vectors.
  static Quat from_matrix(const std::array<std::array<double, 3>, 3>& m) {
    Quat q;
    const double tr = m[0][0] + m[1][1] + m[2][2];
    if (tr > 0) {
      const double s = std::sqrt(tr + 1.0) * 2;
      q = {0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s};
    } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
      const double s = std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]) * 2;
      q = {(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s};
    } else if (m[1][1] > m[2][2]) {
      const double s = std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]) * 2;
      q = {(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s};
    } else {
      const double s = std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]) * 2;
      q = {(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s};
    }
    return q.normalized();
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const {
    const double n = norm();
    if (!(n > 0.0)) throw Error("zero quaternion");
    return {w / n, x / n, y / n, z / n};
  }
  Quat conjugate() const { return {w, -x, -y, -z}; }
  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }
  Vec3 rotate(const Vec3& v) const {
    const Vec3 u{x, y, z};
    const Vec3 t = 2.0 * cross(u, v);
    return v + w * t + cross(u, t);
  }
  std::array<std::array<double, 3>, 3> matrix() const {
    const Vec3 c0 = rotate({1, 0, 0}), c1 = rotate({0, 1, 0}), c2 = rotate({0, 0, 1});
    return {{{c0.x, c1.x, c2.x}, {c0.y, c1.y, c2.y}, {c0.z, c1.z, c2.z}}};
  }
};

inline bool is_unit(const Quat& q, double tol = 1e-9) { return std::abs(q.norm() - 1.0) <= tol; }

/// Spherical-linear interpolation along the shorter arc.
inline Quat slerp(const Quat& a, Quat b, double s) {
  double c = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (c < 0) {
    b = {-b.w, -b.x, -b.y, -b.z};
    c = -c;
  }
  if (c > 0.9995) {
    return Quat{a.w + s * (b.w - a.w), a.x + s * (b.x - a.x), a.y + s * (b.y - a.y),
                a.z + s * (b.z - a.z)}
        .normalized();
  }
  const double theta = std::acos(std::clamp(c, -1.0, 1.0));
  const double sa = std::sin((1 - s) * theta) / std::sin(theta);
  const double sb = std::sin(s * theta) / std::sin(theta);
  return Quat{sa * a.w + sb * b.w, sa * a.x + sb * b.x, sa * a.y + sb * b.y, sa * a.z + sb * b.z}
      .normalized();
}

/// Rigid pose. For cameras the orientation maps camera-frame vectors
/// (x right, y down, z forward) into the world frame.
struct Pose {
  Vec3 position;
  Quat orientation;

  Vec3 to_world(const Vec3& p_local) const { return position + orientation.rotate(p_local); }
  Vec3 to_local(const Vec3& p_world) const {
    return orientation.conjugate().rotate(p_world - position);
  }
};

inline void validate(const Pose& p) {
  if (!is_finite(p.position)) throw Error("pose position is not finite");
  if (!is_unit(p.orientation)) throw Error("pose orientation is not a unit quaternion");
}

/// Camera at `eye` looking at `target`; `up` fixes roll (world z-up by default).
inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 0, 1}) {
  const Vec3 f = normalize(target - eye);
  Vec3 r = cross(f, up);
  if (norm(r) < 1e-12) r = cross(f, Vec3{0, 1, 0});
  r = normalize(r);
  const Vec3 d = cross(f, r);
  const std::array<std::array<double, 3>, 3> m{{{r.x, d.x, f.x}, {r.y, d.y, f.y}, {r.z, d.z, f.z}}};
  return {eye, Quat::from_matrix(m)};
}

struct PixelCoord {
  double x = 0, y = 0;
};

struct CameraIntrinsics {
  int width_px = 1280;
  int height_px = 960;
  double focal_px = 1108.5;  // ~60 degree horizontal field of view at 1280 px
  double cx = 639.5;
  double cy = 479.5;

  static CameraIntrinsics centered(int w, int h, double focal) {
    return {w, h, focal, (w - 1) / 2.0, (h - 1) / 2.0};
  }
  bool contains(const PixelCoord& p) const {
    return p.x >= 0 && p.y >= 0 && p.x <= width_px - 1 && p.y <= height_px - 1;
  }
};

inline void validate(const CameraIntrinsics& k) {
  if (k.width_px <= 0 || k.height_px <= 0) throw Error("camera size must be positive");
  if (!(k.focal_px > 0)) throw Error("focal length must be positive");
  if (!k.contains({k.cx, k.cy})) throw Error("principal point outside image bounds");
}

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit
  Vec3 at(double t) const { return origin + t * dir; }
};

/// Pinhole projection; std::nullopt means the point is behind (or on) the camera plane.
inline std::optional<PixelCoord> project(const Vec3& point, const Pose& pose,
                                         const CameraIntrinsics& k) {
  const Vec3 c = pose.to_local(point);
  if (c.z <= 0) return std::nullopt;
  return PixelCoord{k.cx + k.focal_px * c.x / c.z, k.cy + k.focal_px * c.y / c.z};
}

inline Vec3 camera_direction(const CameraIntrinsics& k, const PixelCoord& px) {
  return normalize(Vec3{(px.x - k.cx) / k.focal_px, (px.y - k.cy) / k.focal_px, 1.0});
}

inline Ray ray_for_pixel(const Pose& pose, const CameraIntrinsics& k, const PixelCoord& px) {
  if (!k.contains(px)) throw Error("pixel (" + fmt_real(px.x) + ", " + fmt_real(px.y) +
                                   ") outside image bounds");
  return {pose.position, normalize(pose.orientation.rotate(camera_direction(k, px)))};
}

/// Full visual angle in degrees subtended by an object of `diameter_m` at `distance_m`.
inline double visual_angle(double diameter_m, double distance_m) {
  if (!(distance_m > 0)) throw Error("visual_angle: distance must be positive");
  if (diameter_m < 0) throw Error("visual_angle: diameter must be non-negative");
  return 2.0 * std::atan(diameter_m / (2.0 * distance_m)) * 180.0 / std::numbers::pi;
}

inline double angle_between_deg(const Vec3& a, const Vec3& b) {
  const double c = dot(normalize(a), normalize(b));
  const double s = norm(cross(normalize(a), normalize(b)));
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

// ---------------------------------------------------------------------------
// Primitives

struct Box {
  Vec3 center;
  Vec3 half_extents;
  Quat orientation;
};

/// Capped cylinder from base_center along axis for `height`.
struct Cylinder {
  Vec3 base_center;
  Vec3 axis{0, 0, 1};
  double radius = 0;
  double height = 0;
};

using Shape = std::variant<Box, Cylinder>;

inline void validate(const Shape& s) {
  if (const auto* b = std::get_if<Box>(&s)) {
    if (!(b->half_extents.x > 0 && b->half_extents.y > 0 && b->half_extents.z > 0))
      throw Error("box half extents must be positive");
    if (!is_unit(b->orientation)) throw Error("box orientation must be a unit quaternion");
  } else {
    const auto& c = std::get<Cylinder>(s);
    if (!(c.radius > 0)) throw Error("cylinder radius must be positive");
    if (!(c.height > 0)) throw Error("cylinder height must be positive");
    if (std::abs(norm(c.axis) - 1.0) > 1e-9) throw Error("cylinder axis must be unit length");
  }
}

struct ShapeHit {
  double t = 0;
  Vec3 normal;  // outward, unit
};

inline constexpr double kHitEpsilon = 1e-6;

namespace detail {

inline std::optional<ShapeHit> intersect_box(const Box& b, const Ray& ray, double t_min) {
  const Quat inv = b.orientation.conjugate();
  const Vec3 o = inv.rotate(ray.origin - b.center);
  const Vec3 d = inv.rotate(ray.dir);
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1, axis1 = -1;
  double sign0 = 0, sign1 = 0;
  for (int a = 0; a < 3; ++a) {
    const double h = b.half_extents[a];
    const double oa = o[a], da = d[a];
    if (std::abs(da) < 1e-300) {
      if (oa < -h || oa > h) return std::nullopt;
      continue;
    }
    double tn = (-h - oa) / da, tf = (h - oa) / da;
    double sn = -1, sf = 1;
    if (tn > tf) {
      std::swap(tn, tf);
      std::swap(sn, sf);
    }
    if (tn > t0) { t0 = tn; axis0 = a; sign0 = sn; }
    if (tf < t1) { t1 = tf; axis1 = a; sign1 = sf; }
  }
  if (t0 > t1) return std::nullopt;
  auto local_normal = [](int axis, double sign) {
    Vec3 n;
    if (axis == 0) n.x = sign;
    if (axis == 1) n.y = sign;
    if (axis == 2) n.z = sign;
    return n;
  };
  if (t0 > t_min && axis0 >= 0) return ShapeHit{t0, b.orientation.rotate(local_normal(axis0, sign0))};
  if (t1 > t_min && axis1 >= 0) return ShapeHit{t1, b.orientation.rotate(local_normal(axis1, sign1))};
  return std::nullopt;
}

inline std::optional<ShapeHit> intersect_cylinder(const Cylinder& c, const Ray& ray, double t_min) {
  const Vec3& a = c.axis;
  const Vec3 rel = ray.origin - c.base_center;
  const double oa = dot(rel, a), da = dot(ray.dir, a);
  const Vec3 op = rel - oa * a;
  const Vec3 dp = ray.dir - da * a;
  std::optional<ShapeHit> best;
  auto consider = [&](double t, const Vec3& n) {
    if (t > t_min && (!best || t < best->t)) best = ShapeHit{t, n};
  };
  const double A = dot(dp, dp);
  if (A > 1e-300) {
    const double B = 2 * dot(op, dp);
    const double C = dot(op, op) - c.radius * c.radius;
    double disc = B * B - 4 * A * C;
    // rounding can push an exact tangent slightly negative
    if (disc < 0 && disc > -1e-12 * (B * B + std::abs(4 * A * C))) disc = 0;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-B - sq) / (2 * A), (-B + sq) / (2 * A)}) {
        const double h = oa + t * da;
        if (h >= 0 && h <= c.height) {
          const Vec3 radial = op + t * dp;
          consider(t, radial / c.radius);
        }
      }
    }
  }
  if (std::abs(da) > 1e-300) {
    for (const auto& [plane_h, n] : {std::pair{0.0, -a}, std::pair{c.height, a}}) {
      const double t = (plane_h - oa) / da;
      const Vec3 radial = op + t * dp;
      if (dot(radial, radial) <= c.radius * c.radius) consider(t, n);
    }
  }
  return best;
}

}  // namespace detail

inline std::optional<ShapeHit> intersect(const Shape& s, const Ray& ray, double t_min = kHitEpsilon) {
  return std::visit(
      [&](const auto& shape) -> std::optional<ShapeHit> {
        using S = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<S, Box>) return detail::intersect_box(shape, ray, t_min);
        else return detail::intersect_cylinder(shape, ray, t_min);
      },
      s);
}

/// Closed point-in-shape test.
inline bool contains(const Shape& s, const Vec3& p) {
  if (const auto* b = std::get_if<Box>(&s)) {
    const Vec3 l = b->orientation.conjugate().rotate(p - b->center);
    return std::abs(l.x) <= b->half_extents.x && std::abs(l.y) <= b->half_extents.y &&
           std::abs(l.z) <= b->half_extents.z;
  }
  const auto& c = std::get<Cylinder>(s);
  const Vec3 rel = p - c.base_center;
  const double h = dot(rel, c.axis);
  const Vec3 radial = rel - h * c.axis;
  return h >= 0 && h <= c.height && dot(radial, radial) <= c.radius * c.radius;
}

/// Axis-aligned bounds of a shape.
inline std::pair<Vec3, Vec3> bounds(const Shape& s) {
  if (const auto* b = std::get_if<Box>(&s)) {
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (int i = 0; i < 8; ++i) {
      const Vec3 corner{(i & 1 ? 1 : -1) * b->half_extents.x, (i & 2 ? 1 : -1) * b->half_extents.y,
                        (i & 4 ? 1 : -1) * b->half_extents.z};
      const Vec3 w = b->center + b->orientation.rotate(corner);
      lo = {std::min(lo.x, w.x), std::min(lo.y, w.y), std::min(lo.z, w.z)};
      hi = {std::max(hi.x, w.x), std::max(hi.y, w.y), std::max(hi.z, w.z)};
    }
    return {lo, hi};
  }
  const auto& c = std::get<Cylinder>(s);
  const Vec3 top = c.base_center + c.height * c.axis;
  auto ext = [&](double ai) { return c.radius * std::sqrt(std::max(0.0, 1 - ai * ai)); };
  const Vec3 e{ext(c.axis.x), ext(c.axis.y), ext(c.axis.z)};
  const Vec3 lo{std::min(c.base_center.x, top.x) - e.x, std::min(c.base_center.y, top.y) - e.y,
                std::min(c.base_center.z, top.z) - e.z};
  const Vec3 hi{std::max(c.base_center.x, top.x) + e.x, std::max(c.base_center.y, top.y) + e.y,
                std::max(c.base_center.z, top.z) + e.z};
  return {lo, hi};
}

}  // namespace voi
