#include <gtest/gtest.h>

#include "voi/scene.hpp"

using namespace voi;

TEST(ParseScene, MinimalDocument) {
  const Scene s = parse_scene(
      "# one VOI and a floor\n"
      "material red 1 0 0\n"
      "voi button box 0 0 0.5 0.1 0.1 0.1 mat red\n"
      "bg env box 0 0 -0.01 2 2 0.01\n");
  EXPECT_EQ(s.vois.size(), 1u);
  EXPECT_EQ(s.catalog().size(), 3u);
  EXPECT_EQ(s.catalog().name(1), "object-no-VOI");
  EXPECT_EQ(s.catalog().name(2), "environment");
  EXPECT_EQ(s.materials[s.vois[0].material].albedo, (Rgb{1, 0, 0}));
}

TEST(ParseScene, TenVoisGiveTwelveClasses) {
  std::string doc;
  for (int i = 0; i < 10; ++i) doc += "voi v" + std::to_string(i) + " box " + std::to_string(i) + " 0 0 0.1 0.1 0.1\n";
  doc += "bg default cyl 0 0 0 0 0 1 0.5 1\n";
  const Scene s = parse_scene(doc);
  const auto cat = s.catalog();
  EXPECT_EQ(cat.size(), 12u);
  EXPECT_EQ(cat.object_default(), 10);
  EXPECT_EQ(cat.environment(), 11);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(s.vois[std::size_t(i)].class_index, i);
}

TEST(ParseScene, DuplicateIdReportsLine) {
  try {
    parse_scene("voi display box 0 0 0 1 1 1\n\nvoi display box 1 0 0 1 1 1\n");
    FAIL() << "expected a ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("duplicate id"), std::string::npos);
  }
}

TEST(ParseScene, RejectsBadDocuments) {
  EXPECT_THROW(parse_scene("voi a box 0 0 0 0 1 1\n"), ParseError);       // non-positive dimension
  EXPECT_THROW(parse_scene("voi a cyl 0 0 0 0 0 1 -0.1 1\n"), ParseError); // negative radius
  EXPECT_THROW(parse_scene("voi a sphere 0 0 0 1\n"), ParseError);         // unknown shape kind
  EXPECT_THROW(parse_scene("bg wall box 0 0 0 1 1 1\n"), ParseError);      // unknown bg kind
  EXPECT_THROW(parse_scene("voi a box 0 0 0 1 1 1 mat nope\n"), ParseError);
  EXPECT_THROW(parse_scene("frobnicate 1 2 3\n"), ParseError);
  EXPECT_THROW(parse_scene("material m 1.5 0 0\n"), ParseError);
  EXPECT_THROW(parse_scene("light 0 0 1 1\nlight 0 0 1 1\n"), ParseError);
  try {
    parse_scene("voi a box 0 0 0 1 1 1\nvoi b cone 0 0 0 1\n");
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("unknown shape kind"), std::string::npos);
  }
}

TEST(ParseScene, OrientationAndCheckerMaterial) {
  const Scene s = parse_scene(
      "material tiles 1 1 1 checker 0.05 0 0 0\n"
      "voi lid box 0 0 1 0.1 0.1 0.02 2 0 0 0 mat tiles  # quaternion is normalized\n"
      "light 0 0 2 0.8\nambient 0.25\nsky 0 0 0\n");
  const auto& b = std::get<Box>(s.vois[0].shape);
  EXPECT_DOUBLE_EQ(b.orientation.w, 1.0);
  EXPECT_EQ(s.light.direction, (Vec3{0, 0, 1}));
  EXPECT_DOUBLE_EQ(s.light.intensity, 0.8);
  EXPECT_DOUBLE_EQ(s.ambient, 0.25);
  const auto& m = s.materials[s.vois[0].material];
  ASSERT_TRUE(m.checker);
  EXPECT_EQ(m.albedo_at({0.01, 0.01, 0.01}), (Rgb{1, 1, 1}));
  EXPECT_EQ(m.albedo_at({0.06, 0.01, 0.01}), (Rgb{0, 0, 0}));
}

TEST(ParseScene, TextRoundTrip) {
  const Scene s = parse_scene(
      "material a 0.2 0.4 0.6 checker 0.1 0.9 0.9 0.9\n"
      "voi x box 0.1 0.2 0.3 0.1 0.2 0.3 0.9238795325112867 0 0 0.3826834323650898 mat a\n"
      "voi y cyl 0 0 0 0 1 0 0.05 0.2\n"
      "bg default box 0 0 0 1 1 1\nbg env box 0 0 -1 5 5 0.01 mat a\n");
  const Scene t = parse_scene(to_text(s));
  EXPECT_EQ(to_text(t), to_text(s));
  EXPECT_EQ(t.catalog(), s.catalog());
}
