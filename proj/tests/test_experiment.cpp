#include <gtest/gtest.h>

#include "voi/evaluate.hpp"
#include "voi/experiment.hpp"

using namespace voi;

namespace {

const Scene& desk() {
  static const Scene s = parse_scene(read_file(std::string(VOI_DATA_DIR) + "/desk_scene.txt"));
  return s;
}

sim::ExperimentConfig small(std::uint64_t seed) {
  sim::ExperimentConfig c;
  c.seed = seed;
  c.fixations = 20;
  c.revisit_target = "button";
  return c;
}

double geo_agreement(const sim::Experiment& ex) {
  geo::GeoConfig g;
  g.intrinsics = ex.config.intrinsics;
  std::vector<gaze::FixationEvent> ev;
  for (const auto& f : ex.fixations) ev.push_back(f.event);
  const auto r = geo::annotate_fixations(desk(), ex.samples, ev, ex.poses, g);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < r.size(); ++i) ok += r[i].annotation.cls == ex.fixations[i].truth;
  return double(ok) / double(r.size());
}

}  // namespace

TEST(Experiment, TruthIsVisibleAndDeterministic) {
  const auto a = sim::simulate_experiment(desk(), small(3));
  const auto b = sim::simulate_experiment(desk(), small(3));
  ASSERT_EQ(a.fixations.size(), 20u);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].x_px, b.samples[i].x_px);
  std::size_t revisits = 0;
  for (const auto& f : a.fixations) {
    revisits += f.revisit;
    EXPECT_LT(f.event.start_ms, f.event.end_ms);
    EXPECT_TRUE(a.config.intrinsics.contains({f.event.cx_px, f.event.cy_px}));
  }
  EXPECT_GT(revisits, 0u);
  EXPECT_GT(a.target_diameter_m, 0.0);
  EXPECT_EQ(geo_agreement(a), 1.0);
}

TEST(Experiment, OffsetMovesGazeButNotTruth) {
  auto c = small(4);
  c.gaze_offset_deg = 1.6;
  const auto ex = sim::simulate_experiment(desk(), c);
  geo::GeoConfig g;
  g.intrinsics = c.intrinsics;
  geo::QaInput in;
  in.samples = ex.samples;
  in.poses = ex.poses;
  in.target_center = ex.target_center;
  for (const auto& f : ex.fixations)
    if (f.revisit) in.revisits.push_back(f.event);
  ASSERT_FALSE(in.revisits.empty());
  const auto q = geo::qa_target_check("p", in, g, 1.5);
  EXPECT_NEAR(q.mean_offset_deg, 1.6, 0.05);
  EXPECT_FALSE(q.pass);
}

TEST(Experiment, PoseDropoutUncoversFixations) {
  auto c = small(5);
  c.fixations = 6;
  const auto full = sim::simulate_experiment(desk(), c);
  const auto& f = full.fixations[2].event;
  c.pose_dropouts_ms = {{f.start_ms - 100, f.end_ms + 100}};
  const auto ex = sim::simulate_experiment(desk(), c);
  EXPECT_LT(ex.poses.size(), full.poses.size());
  std::vector<gaze::FixationEvent> ev;
  for (const auto& x : ex.fixations) ev.push_back(x.event);
  EXPECT_NEAR(geo::pose_coverage(ev, ex.poses), 5.0 / 6.0, 1e-12);
}

TEST(Experiment, WritesFilesAndShiftedFrames) {
  auto c = small(6);
  c.fixations = 3;
  c.appearance = sim::Appearance::shifted;
  const auto ex = sim::simulate_experiment(desk(), c);
  const auto dir = std::filesystem::temp_directory_path() / "voi_test_experiment";
  std::filesystem::remove_all(dir);
  const auto files = sim::write_experiment(desk(), ex, dir, "#tool t");
  EXPECT_EQ(gaze::count_frames(files.frames_dir), ex.frame_count);
  const auto truth = eval::parse_truth(read_file(files.truth), desk().catalog());
  EXPECT_EQ(truth.size(), 3u);
  EXPECT_EQ(gaze::parse_samples(read_file(files.samples)).size(), ex.samples.size());
  EXPECT_EQ(geo::parse_poses(read_file(files.poses)).size(), ex.poses.size());
  EXPECT_EQ(geo::revisit_events(read_file(files.events)).size(), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Experiment, AppearanceShiftMatchesPerPixelTransform) {
  Image img(2, 1, {0.2, 0.5, 0.9});
  const auto s = sim::appearance_shift(img);
  const auto want = Image::to_bytes(sim::appearance_shift(Rgb{0.2, 0.5, 0.9}));
  for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(int(s.rgb[std::size_t(ch)]), int(want[std::size_t(ch)]), 1);
  EXPECT_THROW(sim::parse_appearance("vr"), Error);
}

TEST(Experiment, ConfigErrors) {
  auto c = small(1);
  c.revisit_target = "body";
  EXPECT_THROW(sim::simulate_experiment(desk(), c), Error);
  c = small(1);
  c.fixations = 0;
  EXPECT_THROW(sim::simulate_experiment(desk(), c), Error);
}
