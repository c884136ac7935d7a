#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "voi/geometry.hpp"
#include "voi/scene.hpp"

using namespace voi;

namespace {

Pose identity_camera() { return Pose{{0, 0, 0}, Quat::identity()}; }

CameraIntrinsics cam1000() { return CameraIntrinsics{1280, 960, 1000.0, 640.0, 480.0}; }

}  // namespace

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const auto px = project({0, 0, 1}, identity_camera(), cam1000());
  ASSERT_TRUE(px);
  EXPECT_EQ(px->x, 640.0);
  EXPECT_EQ(px->y, 480.0);
}

TEST(Project, SimilarTriangles) {
  // 0.1 m right at 1 m depth with f = 1000 px -> 100 px right of the principal point
  const auto px = project({0.1, 0, 1}, identity_camera(), cam1000());
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->x, 740.0, 1e-9);
  EXPECT_NEAR(px->y, 480.0, 1e-9);
}

TEST(Project, BehindCamera) {
  EXPECT_FALSE(project({0, 0, -1}, identity_camera(), cam1000()));
  EXPECT_FALSE(project({0.3, 0.1, 0}, identity_camera(), cam1000()));
}

TEST(RayForPixel, PrincipalPointLooksForward) {
  const Pose pose = look_at({0, -1, 1}, {0, 0, 1});
  const auto k = CameraIntrinsics::centered(640, 480, 500);
  const Ray r = ray_for_pixel(pose, k, {k.cx, k.cy});
  EXPECT_NEAR(r.dir.x, 0, 1e-12);
  EXPECT_NEAR(r.dir.y, 1, 1e-12);
  EXPECT_NEAR(r.dir.z, 0, 1e-12);
}

TEST(RayForPixel, CornerHasBothLateralComponents) {
  const Ray r = ray_for_pixel(identity_camera(), cam1000(), {0, 0});
  EXPECT_NE(r.dir.x, 0.0);
  EXPECT_NE(r.dir.y, 0.0);
}

TEST(RayForPixel, OutOfBoundsThrows) {
  EXPECT_THROW(ray_for_pixel(identity_camera(), cam1000(), {-1, 0}), Error);
  EXPECT_THROW(ray_for_pixel(identity_camera(), cam1000(), {0, 960}), Error);
}

TEST(RayForPixel, RoundTripProperty) {
  Rng rng(11);
  const auto k = CameraIntrinsics::centered(1280, 960, 1108.5);
  for (int i = 0; i < 100; ++i) {
    const Pose pose{{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0, 2)}, oracle::random_rotation(rng)};
    const PixelCoord px{rng.uniform(0, 1279), rng.uniform(0, 959)};
    const Ray r = ray_for_pixel(pose, k, px);
    for (double t : {0.1, 1.0, 7.5}) {
      const auto back = project(r.at(t), pose, k);
      ASSERT_TRUE(back);
      EXPECT_NEAR(back->x, px.x, 1e-6);
      EXPECT_NEAR(back->y, px.y, 1e-6);
    }
  }
}

TEST(LookAt, ProducesUnitQuaternionFacingTarget) {
  const Pose p = look_at({1, -2, 1.6}, {0, 0, 1});
  EXPECT_TRUE(is_unit(p.orientation));
  const Vec3 f = p.orientation.rotate({0, 0, 1});
  const Vec3 expected = normalize(Vec3{-1, 2, -0.6});
  EXPECT_NEAR(dot(f, expected), 1.0, 1e-12);
  // image "down" points toward negative world z
  EXPECT_LT(p.orientation.rotate({0, 1, 0}).z, 0);
}

TEST(Intersect, AxisAlignedBox) {
  Scene s;
  s.materials.push_back({});
  s.vois.push_back(Voi{"b", 0, Box{{0, 0, 0}, {0.5, 0.5, 0.5}, Quat::identity()}, 0});
  const auto hit = intersect_ray(s, Ray{{0, 0, -2}, {0, 0, 1}});
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->t, 1.5);
  EXPECT_EQ(hit->normal, (Vec3{0, 0, -1}));
  EXPECT_EQ(hit->class_index, 0);
}

TEST(Intersect, RotatedBoxNormalIsRotated) {
  const Box b{{0, 0, 0}, {0.5, 0.5, 0.5}, Quat::from_axis_angle({0, 0, 1}, std::numbers::pi / 4)};
  const auto h = intersect(b, Ray{{-3, 0, 0}, {1, 0, 0}});
  ASSERT_TRUE(h);
  EXPECT_NEAR(h->t, 3 - 0.5 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(std::abs(h->normal.x), std::sqrt(0.5), 1e-12);
}

TEST(Intersect, CylinderTangentAndMiss) {
  const Cylinder c{{0, 0, 0}, {0, 0, 1}, 0.1, 1.0};
  // Quadratic for a ray parallel to x at lateral offset d: t^2 - 2t + 1 + d^2 - r^2 = 0,
  // discriminant 4(r^2 - d^2): zero at d = r (tangent, t = 1), negative beyond.
  const auto tangent = intersect(c, Ray{{-1, 0.1, 0.5}, {1, 0, 0}});
  ASSERT_TRUE(tangent);
  EXPECT_NEAR(tangent->t, 1.0, 1e-9);
  EXPECT_NEAR(tangent->normal.y, 1.0, 1e-9);
  EXPECT_FALSE(intersect(c, Ray{{-1, 0.1 + 1e-3, 0.5}, {1, 0, 0}}));
}

TEST(Intersect, CylinderCaps) {
  const Cylinder c{{0, 0, 0}, {0, 0, 1}, 0.2, 0.5};
  const auto top = intersect(c, Ray{{0.05, 0, 2}, {0, 0, -1}});
  ASSERT_TRUE(top);
  EXPECT_NEAR(top->t, 1.5, 1e-12);
  EXPECT_NEAR(top->normal.z, 1.0, 1e-12);
  const auto bottom = intersect(c, Ray{{0.05, 0, -1}, {0, 0, 1}});
  ASSERT_TRUE(bottom);
  EXPECT_NEAR(bottom->t, 1.0, 1e-12);
  EXPECT_NEAR(bottom->normal.z, -1.0, 1e-12);
}

TEST(Intersect, OccludingVoiWins) {
  // VOI box at y in [0.4, 0.6] in front of a background wall at y in [0.95, 1.05]:
  // t_voi = 1.4 < t_wall = 1.95 from y = -1.
  const Scene s = parse_scene(
      "voi front box 0 0.5 0 0.1 0.1 0.1\n"
      "bg default box 0 1 0 1 0.05 1\n");
  const auto hit = intersect_ray(s, Ray{{0, -1, 0}, {0, 1, 0}});
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->class_index, 0);
  EXPECT_NEAR(hit->t, 1.4, 1e-12);
  const auto beside = intersect_ray(s, Ray{{0.5, -1, 0}, {0, 1, 0}});
  ASSERT_TRUE(beside);
  EXPECT_EQ(beside->class_index, 1);
  EXPECT_NEAR(beside->t, 1.95, 1e-12);
}

TEST(Intersect, TieKeepsLowerPrimitiveIndex) {
  // two identical boxes: the first declared wins
  const Scene s = parse_scene(
      "voi a box 0 0 0 0.2 0.2 0.2\n"
      "voi b box 0 0 0 0.2 0.2 0.2\n");
  const auto hit = intersect_ray(s, Ray{{0, 0, -1}, {0, 0, 1}});
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->class_index, 0);
}

TEST(Intersect, MissIsEnvironment) {
  const Scene s = parse_scene("voi a box 0 0 0 0.2 0.2 0.2\n");
  EXPECT_FALSE(intersect_ray(s, Ray{{0, 0, -1}, {0, 1, 0}}));
  EXPECT_EQ(class_along_ray(s, Ray{{0, 0, -1}, {0, 1, 0}}), s.catalog().environment());
}

TEST(Intersect, AgreesWithBruteForceMarch) {
  Rng rng(2024);
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    const Scene s = oracle::random_scene(rng);
    const Vec3 origin = 3.0 * normalize(Vec3{rng.normal(), rng.normal(), rng.normal()});
    Vec3 aim{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
    if (i % 2 == 0) {
      const auto& shape = s.primitive_shape(rng.index(s.primitive_count()));
      if (const auto* b = std::get_if<Box>(&shape)) aim = b->center + 0.05 * aim;
      else aim = std::get<Cylinder>(shape).base_center + 0.05 * aim;
    }
    const Ray ray{origin, normalize(aim - origin)};
    const auto fast = intersect_ray(s, ray);
    const auto slow = oracle::march(s, ray, 6.0);
    ASSERT_EQ(fast.has_value(), slow.has_value()) << "ray " << i;
    if (!fast) continue;
    ++hits;
    EXPECT_EQ(fast->class_index, slow->class_index) << "ray " << i;
    EXPECT_NEAR(fast->t, slow->t, 2e-4) << "ray " << i;
  }
  EXPECT_GT(hits, 100);
}

TEST(VisualAngle, ClosedForm) {
  EXPECT_EQ(visual_angle(0, 1), 0.0);
  // 2·atan(0.005 / 0.955) = 0.59997°
  EXPECT_NEAR(visual_angle(0.010, 0.955), 0.600, 1e-3);
  // 2·atan(0.005) = 0.57295°
  EXPECT_NEAR(visual_angle(0.010, 1.0), 0.573, 1e-3);
  EXPECT_THROW(visual_angle(0.01, 0), Error);
  EXPECT_THROW(visual_angle(0.01, -1), Error);
}

TEST(Slerp, Endpoints) {
  const Quat a = Quat::identity();
  const Quat b = Quat::from_axis_angle({0, 0, 1}, std::numbers::pi / 2);
  const Quat m = slerp(a, b, 0.5);
  const Vec3 v = m.rotate({1, 0, 0});
  EXPECT_NEAR(v.x, std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(v.y, std::sqrt(0.5), 1e-12);
}
