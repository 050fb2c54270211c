#include "casim/data/motion_io.hpp"
#include "casim/data/synth.hpp"
#include "casim/render/render.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace casim::render {
namespace {

data::MotionSequence walk(data::Direction d, int frames) {
  return data::synthesize_reference({{{data::Action::walk, data::Side::none, d, data::Speed::normally, frames}}});
}

int count_files(const std::filesystem::path& dir) {
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.is_regular_file() ? 1 : 0;
  return n;
}

TEST(Render, OneImagePerFramePlusTrajectory) {
  testing::TempDir dir;
  const auto motion = walk(data::Direction::forward, 23);
  const auto r = render_motion(motion, dir.path());
  EXPECT_EQ(r.frames.size(), 23u);
  EXPECT_EQ(count_files(dir.path()), 24);
  EXPECT_EQ(r.frames.front().filename(), "frame_00000.svg");
  EXPECT_TRUE(std::filesystem::exists(r.trajectory));
  std::ifstream is(r.trajectory);
  const std::string svg{std::istreambuf_iterator<char>(is), {}};
  EXPECT_NE(svg.find("stroke=\"black\""), std::string::npos);
}

TEST(Render, ZeroVelocityIsSinglePoint) {
  data::MotionSequence m = walk(data::Direction::forward, 15);
  m.frames.col(data::kRootVelX).setZero();
  m.frames.col(data::kRootVelZ).setZero();
  m.frames.col(data::kRootYawVel).setZero();
  const auto path = integrate_root(m.frames);
  ASSERT_EQ(path.size(), 15u);
  for (const auto& p : path) EXPECT_EQ(p, path.front());
}

TEST(Render, ForwardWalkIsMonotone) {
  const auto path = integrate_root(walk(data::Direction::forward, 60).frames);
  for (std::size_t t = 1; t < path.size(); ++t) {
    EXPECT_GT(path[t][1], path[t - 1][1]);
    EXPECT_EQ(path[t][0], 0.0);
  }
  const auto left = integrate_root(walk(data::Direction::left, 60).frames);
  EXPECT_LT(left.back()[0], 0.0);
}

TEST(Render, CorruptFileNamesHeaderField) {
  testing::TempDir dir;
  data::save_motion(walk(data::Direction::forward, 10), dir / "m.mot");
  std::string bytes;
  {
    std::ifstream is(dir / "m.mot", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  bytes[0] ^= 0x55;
  {
    std::ofstream os(dir / "bad.mot", std::ios::binary);
    os << bytes;
  }
  try {
    render_motion(dir / "bad.mot", dir / "out");
    FAIL() << "expected an error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace casim::render
