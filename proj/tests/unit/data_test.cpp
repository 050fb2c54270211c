#include "casim/data/dataset.hpp"
#include "casim/data/motion_io.hpp"
#include "casim/data/synth.hpp"
#include "casim/io/binary.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>

namespace casim::data {
namespace {

ActionStep step(Action a, int duration, Side side = Side::none, Direction dir = Direction::none,
                Speed speed = Speed::normally) {
  ActionStep s;
  s.action = a;
  s.duration = duration;
  s.side = side;
  s.direction = dir;
  s.speed = speed;
  return s;
}

std::vector<std::string> content_words(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& w : text::split_words(text)) {
    if (is_content_word(w)) out.push_back(w);
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Synth, ForwardWalkHasPositiveForwardVelocity) {
  const ActionScript s{{step(Action::walk, 40, Side::none, Direction::forward)}};
  const auto m = synthesize_motion(s, 0);
  ASSERT_EQ(m.length(), 40);
  for (int t = 0; t < 40; ++t) EXPECT_GT(m.frames(t, kRootVelZ), 0.0) << "frame " << t;
}

TEST(Synth, SitThenStandHeightIsMonotone) {
  const ActionScript s{{step(Action::sit, 20), step(Action::stand, 20)}};
  const auto m = synthesize_motion(s, 0);
  for (int t = 1; t < 20; ++t) EXPECT_LE(m.frames(t, kRootHeight), m.frames(t - 1, kRootHeight)) << t;
  for (int t = 21; t < 40; ++t) EXPECT_GE(m.frames(t, kRootHeight), m.frames(t - 1, kRootHeight)) << t;
}

TEST(Synth, SeedChangesFramesButNotSegments) {
  const ActionScript s{{step(Action::wave, 24, Side::left), step(Action::jump, 30)}};
  const auto a = synthesize_motion(s, 0);
  const auto b = synthesize_motion(s, 1);
  EXPECT_GT((a.frames - b.frames).norm(), 0.0);
  EXPECT_EQ(a.segments, b.segments);
  EXPECT_NO_THROW(check_invariants(a));
}

TEST(Synth, InvalidScriptsAreRejected) {
  EXPECT_THROW(synthesize_motion(ActionScript{}, 0), std::invalid_argument);
  EXPECT_THROW(synthesize_motion(ActionScript{{step(Action::raise_arm, 20)}}, 0), std::invalid_argument);
  EXPECT_THROW(synthesize_motion(ActionScript{{step(Action::walk, 2)}}, 0), std::invalid_argument);
}

TEST(Synth, ReferenceIsDeterministic) {
  const ActionScript s{{step(Action::kick, 30, Side::right)}};
  EXPECT_TRUE((synthesize_reference(s).frames.array() == synthesize_reference(s).frames.array()).all());
}

TEST(RenderText, SideWordFollowsScript) {
  const ActionScript s{{step(Action::raise_arm, 20, Side::left)}};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto words = text::split_words(render_text(s, seed));
    EXPECT_NE(std::find(words.begin(), words.end(), "left"), words.end());
    EXPECT_EQ(std::find(words.begin(), words.end(), "right"), words.end());
  }
}

TEST(RenderText, PreservesActionOrder) {
  const ActionScript s{{step(Action::walk, 20, Side::none, Direction::forward, Speed::slowly), step(Action::jump, 20)}};
  const auto text = render_text(s, 3);
  ASSERT_NE(text.find("walks"), std::string::npos);
  ASSERT_NE(text.find("jumps"), std::string::npos);
  EXPECT_LT(text.find("walks"), text.find("jumps"));
}

TEST(RenderText, TemplatesVarySurfaceNotContent) {
  const ActionScript s{{step(Action::wave, 20, Side::right), step(Action::sit, 20)}};
  const auto a = render_text(s, 0), b = render_text(s, 1), c = render_text(s, 2);
  EXPECT_NE(a, b);
  EXPECT_NE(b, c);
  EXPECT_NE(a, c);
  EXPECT_EQ(content_words(a), content_words(b));
  EXPECT_EQ(content_words(b), content_words(c));
}

TEST(RenderText, SpansCoverEachStep) {
  const ActionScript s{{step(Action::wave, 20, Side::left), step(Action::sit, 20)}};
  const auto r = render_text_spans(s, 5);
  const auto words = text::split_words(r.text);
  ASSERT_EQ(r.step_words.size(), 2u);
  EXPECT_LT(r.step_words[0].second, r.step_words[1].first + 1);
  const auto [first, last] = r.step_words[1];
  EXPECT_TRUE(std::find(words.begin() + first, words.begin() + last, "sits") != words.begin() + last);
}

TEST(MotionIo, RoundTripIsExact) {
  testing::TempDir dir;
  const auto m = synthesize_motion(ActionScript{{step(Action::run, 33, Side::none, Direction::left)}}, 4);
  save_motion(m, dir / "m.mot");
  const auto back = load_motion(dir / "m.mot");
  EXPECT_TRUE((back.frames.array() == m.frames.array()).all());
  EXPECT_EQ(back.segments, m.segments);
  EXPECT_EQ(back.fps, m.fps);
}

TEST(MotionIo, CorruptHeaderNamesField) {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "bad.mot", std::ios::binary);
    out << "NOTAMOTIONFILE";
  }
  try {
    load_motion(dir / "bad.mot");
    FAIL() << "expected a throw";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos) << e.what();
  }
}

class DatasetTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("casim-ds");
    DatasetOptions opt;
    opt.count = 2000;
    opt.seed = 7;
    manifest_ = new DatasetManifest(generate_dataset(opt, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete dir_;
  }
  static testing::TempDir* dir_;
  static DatasetManifest* manifest_;
};
testing::TempDir* DatasetTest::dir_ = nullptr;
DatasetManifest* DatasetTest::manifest_ = nullptr;

TEST_F(DatasetTest, SplitRatios) {
  EXPECT_NEAR(static_cast<double>(manifest_->split(Split::train).size()), 1600.0, 1.0);
  EXPECT_NEAR(static_cast<double>(manifest_->split(Split::valid).size()), 100.0, 1.0);
  EXPECT_NEAR(static_cast<double>(manifest_->split(Split::test).size()), 300.0, 1.0);
}

TEST_F(DatasetTest, NormalizedTrainChannelsHaveZeroMeanAndNoNans) {
  const auto ds = load_dataset(dir_->path());
  nn::RowVec sum = nn::RowVec::Zero(kNumChannels);
  double rows = 0;
  for (const auto& s : ds.train) {
    ASSERT_TRUE(s.normalized.allFinite());
    sum += s.normalized.colwise().sum();
    rows += static_cast<double>(s.normalized.rows());
  }
  for (int c = 0; c < kNumChannels; ++c) {
    EXPECT_GT(sum(c) / rows, -1e-6) << c;
    EXPECT_LT(sum(c) / rows, 1e-6) << c;
  }
  for (const auto& s : ds.test) {
    EXPECT_TRUE((s.normalized.col(kReserved0).array() == 0.0).all());
    EXPECT_TRUE((s.normalized.col(kReserved1).array() == 0.0).all());
  }
}

TEST_F(DatasetTest, ManifestRoundTrip) {
  save_manifest(*manifest_, dir_->path() / "copy.json");
  const auto back = load_manifest(dir_->path() / "copy.json");
  ASSERT_EQ(back.entries.size(), manifest_->entries.size());
  EXPECT_EQ(back.entries[17].script, manifest_->entries[17].script);
  EXPECT_EQ(back.entries[17].prompts, manifest_->entries[17].prompts);
  EXPECT_TRUE((back.stats.mean.array() == manifest_->stats.mean.array()).all());
}

TEST_F(DatasetTest, SameSeedReproducesDataset) {
  testing::TempDir other;
  DatasetOptions opt;
  opt.count = 2000;
  opt.seed = 7;
  const auto again = generate_dataset(opt, other.path());
  ASSERT_EQ(again.entries.size(), manifest_->entries.size());
  for (std::size_t i = 0; i < again.entries.size(); i += 97) {
    EXPECT_EQ(again.entries[i].prompts, manifest_->entries[i].prompts);
    const auto a = load_motion(other.path() / again.entries[i].motion_file);
    const auto b = load_motion(dir_->path() / manifest_->entries[i].motion_file);
    EXPECT_TRUE((a.frames.array() == b.frames.array()).all());
  }
}

TEST(Normalizer, ConstantChannelMapsToZero) {
  nn::Mat a = nn::Mat::Ones(4, 3);
  a.col(1) << 1, 2, 3, 4;
  const auto n = Normalizer::fit({&a});
  const auto z = n.normalize(a);
  EXPECT_TRUE(z.allFinite());
  EXPECT_TRUE((z.col(0).array() == 0.0).all());
  EXPECT_LT((n.denormalize(z) - a).norm(), 1e-12);
}

TEST(ScriptJson, RoundTrip) {
  const ActionScript s{{step(Action::turn, 25, Side::none, Direction::right, Speed::quickly),
                        step(Action::clap, 17)}};
  EXPECT_EQ(script_from_json(script_to_json(s)), s);
}

}  // namespace
}  // namespace casim::data
