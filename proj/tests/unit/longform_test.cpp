#include "casim/longform/longform.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

namespace casim::longform {
namespace {

Mat ramp(int rows, double base) {
  Mat m(rows, 3);
  for (int t = 0; t < rows; ++t) m.row(t) << base + t, 2.0 * base - t, 0.5 * t;
  return m;
}

TEST(Timeline, OverlapArithmetic) {
  EXPECT_EQ(timeline_length({60, 60}, 20), 100);
  EXPECT_EQ(timeline_length({60, 70, 80}, 20), 170);
  EXPECT_EQ(timeline_length({60, 70}, 0), 130);
}

TEST(Plan, Validation) {
  LongformPlan p;
  p.prompts = {"a person walks", "a person sits down"};
  p.lengths = {60, 60};
  p.handshake = 20;
  EXPECT_NO_THROW(validate_plan(p));
  p.lengths = {60, 40};
  EXPECT_THROW(validate_plan(p), std::invalid_argument);
  p.prompts.push_back("a person jumps");
  p.lengths = {60, 50, 60};
  EXPECT_THROW(validate_plan(p), std::invalid_argument);  // inner clip below 3H
  p.lengths = {60, 60};
  EXPECT_THROW(validate_plan(p), std::invalid_argument);
  p.prompts = {"a person walks"};
  p.lengths = {60};
  EXPECT_THROW(validate_plan(p), std::invalid_argument);
}

TEST(Blend, EndpointMidpointAndCopies) {
  const int h = 4;
  const Mat a = ramp(10, 0.0);
  const Mat b = ramp(12, 100.0);
  const auto m = blend_handshake({a, b}, h);
  ASSERT_EQ(m.frames.rows(), 18);
  ASSERT_EQ(m.clips.size(), 2u);
  EXPECT_EQ(m.clips[1].start, 6);
  // First overlap frame is the left clip exactly.
  EXPECT_TRUE((m.frames.row(6).array() == a.row(6).array()).all());
  // Midpoint is the exact average.
  EXPECT_TRUE((m.frames.row(8).array() == (0.5 * a.row(8) + 0.5 * b.row(2)).array()).all());
  EXPECT_TRUE((m.frames.topRows(6).array() == a.topRows(6).array()).all());
  EXPECT_TRUE((m.frames.bottomRows(8).array() == b.bottomRows(8).array()).all());
  ASSERT_EQ(m.windows.size(), 1u);
  EXPECT_EQ(m.windows[0].end - m.windows[0].start, 2 * h);
  EXPECT_EQ(m.windows[0].start, 4);
}

TEST(Blend, AgreeingClipsAreFixedPoint) {
  const Mat full = ramp(30, 1.0);
  const std::vector<Mat> clips = {full.topRows(12), full.middleRows(8, 14), full.bottomRows(12)};
  const auto m = blend_handshake(clips, 4);
  ASSERT_EQ(m.frames.rows(), 30);
  EXPECT_LT((m.frames - full).cwiseAbs().maxCoeff(), 1e-12);
  const Mat same = Mat::Constant(10, 3, 0.3);
  const auto c = blend_handshake({same, same}, 4);
  EXPECT_TRUE((c.frames.array() == 0.3).all());
}

TEST(Blend, ZeroHandshakeConcatenates) {
  const Mat a = ramp(5, 0.0), b = ramp(7, 9.0);
  const auto m = blend_handshake({a, b}, 0);
  ASSERT_EQ(m.frames.rows(), 12);
  EXPECT_TRUE(m.windows.empty());
  EXPECT_TRUE((m.frames.topRows(5).array() == a.array()).all());
  EXPECT_TRUE((m.frames.bottomRows(7).array() == b.array()).all());
}

TEST(TransitionWindows, ExtractsWindowRows) {
  const auto m = blend_handshake({ramp(10, 0.0), ramp(12, 5.0), ramp(10, 9.0)}, 4);
  const auto w = transition_windows(m);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1].rows(), 8);
  EXPECT_TRUE((w[1].array() == m.frames.middleRows(m.windows[1].start, 8).array()).all());
}

class RefineTest : public ::testing::Test {
 protected:
  text::Vocabulary vocab = testing::toy_vocab();
  diffusion::DiffusionModel model{testing::toy_text_config(vocab.size()),
                                  testing::toy_diffusion_config(diffusion::Variant::decoder), text::Injection::casim, 2};
  LongformPlan plan() const {
    LongformPlan p;
    p.prompts = {"a person walks forward slowly", "a person raises the left arm", "someone sits down"};
    p.lengths = {14, 16, 14};
    p.handshake = 4;
    p.seed = 3;
    return p;
  }
};

TEST_F(RefineTest, LengthConservationAndDeterminism) {
  const auto p = plan();
  const auto a = generate_longform(p, model, vocab);
  const auto b = generate_longform(p, model, vocab);
  EXPECT_EQ(a.frames.rows(), 14 + 16 + 14 - 2 * 4);
  EXPECT_TRUE((a.frames.array() == b.frames.array()).all());
  const auto clips = generate_clips(p, model, vocab);
  ASSERT_EQ(clips.size(), 3u);
  EXPECT_EQ(clips[1].rows(), 16);
}

TEST_F(RefineTest, ZeroStepsIsIdentity) {
  auto p = plan();
  p.refine = 0;
  const auto blended = blend_handshake(generate_clips(p, model, vocab), p.handshake);
  const auto refined = refine_transitions(blended, model, p, vocab);
  EXPECT_TRUE((refined.frames.array() == blended.frames.array()).all());
}

TEST_F(RefineTest, OnlyWindowsChange) {
  auto p = plan();
  p.refine = 5;
  const auto blended = blend_handshake(generate_clips(p, model, vocab), p.handshake);
  const auto refined = refine_transitions(blended, model, p, vocab);
  std::vector<bool> inside(static_cast<std::size_t>(blended.frames.rows()), false);
  for (const auto& w : blended.windows) {
    for (int t = w.start; t < w.end; ++t) inside[static_cast<std::size_t>(t)] = true;
  }
  bool changed = false;
  for (Eigen::Index t = 0; t < blended.frames.rows(); ++t) {
    const bool same = (refined.frames.row(t).array() == blended.frames.row(t).array()).all();
    if (inside[static_cast<std::size_t>(t)]) {
      changed = changed || !same;
    } else {
      EXPECT_TRUE(same) << "frame " << t;
    }
  }
  EXPECT_TRUE(changed);
}

TEST_F(RefineTest, RejectsTooManySteps) {
  auto p = plan();
  p.refine = 11;
  const auto blended = blend_handshake(generate_clips(plan(), model, vocab), p.handshake);
  EXPECT_THROW(refine_transitions(blended, model, p, vocab), std::invalid_argument);
}

TEST(TransitionMetrics, IdenticalWindowsHaveZeroDiversity) {
  const auto& ds = testing::small_dataset();
  eval::MatcherConfig cfg;
  cfg.vocab_size = ds.vocab.size();
  cfg.width = 16;
  cfg.heads = 2;
  cfg.ff_hidden = 32;
  const eval::Matcher matcher(cfg, 1);
  const std::vector<Mat> windows(8, ds.test[0].normalized.topRows(40));
  std::vector<const Mat*> refs;
  for (const auto& s : ds.test) refs.push_back(&s.normalized);
  const auto crops = random_crops(refs, 8, 40, 2);
  ASSERT_EQ(crops.size(), 8u);
  const auto m = transition_metrics(windows, crops, matcher, 0);
  EXPECT_EQ(m.diversity, 0.0);
  EXPECT_EQ(m.windows, 8);
  EXPECT_TRUE(m.fid_regularized);
}

TEST(BoundaryCrops, CenteredOnActionBoundaries) {
  const auto& ds = testing::small_dataset();
  std::vector<const data::Sample*> samples;
  int boundaries = 0;
  for (const auto& s : ds.test) {
    samples.push_back(&s);
    ASSERT_EQ(s.motion.segments.size(), s.script.steps.size());
    for (std::size_t k = 1; k < s.motion.segments.size(); ++k) {
      const int b = s.motion.segments[k].start;
      if (b - 10 >= 0 && b + 10 <= s.normalized.rows()) ++boundaries;
    }
  }
  const auto crops = boundary_crops(samples, 10);
  EXPECT_EQ(static_cast<int>(crops.size()), boundaries);
  for (const auto& c : crops) EXPECT_EQ(c.rows(), 20);
}

}  // namespace
}  // namespace casim::longform
