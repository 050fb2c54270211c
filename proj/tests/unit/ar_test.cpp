#include "casim/ar/generator.hpp"

#include "gradcheck.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

namespace casim::ar {
namespace {

using nn::Mat;

TEST(ArMask, TextOnly) {
  const auto m = build_ar_mask(3, 0, {true, true, true});
  EXPECT_TRUE(m.all());
  EXPECT_EQ(m.rows(), 3);
}

TEST(ArMask, CausalMotionRows) {
  const auto m = build_ar_mask(2, 2, {true, true});
  EXPECT_TRUE(m(2, 0) && m(2, 1) && m(2, 2));
  EXPECT_FALSE(m(2, 3));
  EXPECT_TRUE(m.row(3).all());
  EXPECT_FALSE(m(0, 2) || m(1, 3));
}

TEST(ArMask, PadColumnsAndRowsAreFalse) {
  const auto m = build_ar_mask(3, 2, {true, true, false});
  EXPECT_FALSE(m.col(2).any());
  EXPECT_FALSE(m.row(2).any());
  EXPECT_EQ(first_prediction_row({true, true, false}), 1);
}

TEST(TeacherForcing, ZeroRateKeepsTokens) {
  nn::Rng rng(0);
  const std::vector<int> gt = {3, 1, 4, 1, 5};
  EXPECT_EQ(corrupt_tokens(gt, 6, 0.0, rng), gt);
}

TEST(TeacherForcing, FullRateRedrawsEveryToken) {
  nn::Rng rng(0);
  const std::vector<int> gt(5000, 0);
  const auto out = corrupt_tokens(gt, 1000, 1.0, rng);
  const auto kept = std::count(out.begin(), out.end(), 0);
  EXPECT_LT(kept, 30);
  EXPECT_TRUE(std::all_of(out.begin(), out.end(), [](int t) { return t >= 0 && t < 1000; }));
}

TEST(TeacherForcing, ParsePolicies) {
  EXPECT_EQ(parse_teacher_forcing("0.25").rate, 0.25);
  EXPECT_EQ(parse_teacher_forcing("uniform").kind, TeacherForcing::Kind::uniform);
  EXPECT_THROW(parse_teacher_forcing("1.5"), std::invalid_argument);
  EXPECT_THROW(parse_teacher_forcing("often"), std::invalid_argument);
}

class ArModelTest : public ::testing::Test {
 protected:
  text::Vocabulary vocab = testing::toy_vocab();
  ArModel model{testing::toy_text_config(vocab.size()), testing::toy_ar_config(), text::Injection::casim, 4};
  text::TextTokenSeq tokens = text::tokenize("a person raises the left arm", vocab);
};

TEST_F(ArModelTest, FutureTokensNeverChangeEarlierLogits) {
  const auto c = model.condition(tokens);
  const std::vector<int> a = {1, 2, 3, 4, 5};
  const std::vector<int> b = {1, 2, 0, 5, 4};
  const Mat la = model.transformer().forward(c, a).value();
  const Mat lb = model.transformer().forward(c, b).value();
  const int upto = tokens.length() + 2;  // rows before the first changed token's row
  EXPECT_TRUE((la.topRows(upto).array() == lb.topRows(upto).array()).all());
  EXPECT_FALSE((la.bottomRows(3).array() == lb.bottomRows(3).array()).all());
}

TEST_F(ArModelTest, TextTokensReachMotionLogits) {
  const std::vector<int> motion = {1, 2, 3};
  const Mat la = model.transformer().forward(model.condition(tokens), motion).value();
  const Mat lb =
      model.transformer().forward(model.condition(text::tokenize("a person raises the right arm", vocab)), motion).value();
  EXPECT_GT((la.bottomRows(3) - lb.bottomRows(3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(ArModelTest, PadContentIsInvisible) {
  auto batch = text::tokenize_batch({"a person walks", "someone raises the right arm then sits down"}, vocab);
  const std::vector<int> motion = {1, 2, 3};
  const Mat before = model.transformer().forward(model.condition(batch[0]), motion).value();
  for (std::size_t i = 0; i < batch[0].ids.size(); ++i) {
    if (!batch[0].valid[i]) batch[0].ids[i] = vocab.id("jumps");
  }
  const Mat after = model.transformer().forward(model.condition(batch[0]), motion).value();
  for (int r = 0; r < before.rows(); ++r) {
    if (r < batch[0].length() && !batch[0].valid[static_cast<std::size_t>(r)]) continue;
    EXPECT_TRUE((before.row(r).array() == after.row(r).array()).all()) << "row " << r;
  }
}

TEST_F(ArModelTest, PooledBaselineUsesSameTransformer) {
  ArModel cls(testing::toy_text_config(vocab.size()), testing::toy_ar_config(), text::Injection::cls, 4);
  const auto c = cls.condition(tokens);
  EXPECT_EQ(c.length(), 1);
  const std::vector<int> motion = {0, 1};
  EXPECT_EQ(cls.transformer().forward(c, motion).rows(), 3);
}

TEST_F(ArModelTest, ImmediateEndIsFlaggedEmpty) {
  model.transformer().head.bias.mutable_value()(0, model.transformer().end_id()) = 1e3;
  const auto r = model.sample(tokens, {});
  EXPECT_TRUE(r.empty);
  EXPECT_TRUE(r.tokens.has_end());
}

TEST_F(ArModelTest, GreedyIsDeterministicAndCapped) {
  model.transformer().head.bias.mutable_value()(0, model.transformer().end_id()) = -1e3;
  const auto a = model.sample(tokens, {});
  const auto b = model.sample(tokens, {});
  EXPECT_EQ(a.tokens.ids, b.tokens.ids);
  EXPECT_TRUE(a.hit_cap);
  EXPECT_EQ(static_cast<int>(a.tokens.ids.size()), model.transformer().config().max_motion_tokens);
}

TEST_F(ArModelTest, TopKSeedControlsSampling) {
  model.transformer().head.bias.mutable_value()(0, model.transformer().end_id()) = -1e3;
  SamplerConfig s;
  s.kind = SamplerConfig::Kind::top_k;
  s.seed = 0;
  const auto a = model.sample(tokens, s);
  const auto again = model.sample(tokens, s);
  s.seed = 1;
  const auto b = model.sample(tokens, s);
  EXPECT_EQ(a.tokens.ids, again.tokens.ids);
  EXPECT_NE(a.tokens.ids, b.tokens.ids);
}

TEST_F(ArModelTest, TraceHasOneRowPerEmission) {
  model.transformer().head.bias.mutable_value()(0, model.transformer().end_id()) = -1e3;
  std::vector<std::vector<Mat>> trace;
  const auto r = model.sample(tokens, {}, &trace);
  ASSERT_EQ(trace.size(), model.transformer().blocks.size());
  EXPECT_EQ(trace[0][0].rows(), static_cast<Eigen::Index>(r.tokens.ids.size()));
  EXPECT_EQ(trace[0][0].cols(), tokens.length());
}

TEST_F(ArModelTest, CaptureDoesNotChangeSamples) {
  SamplerConfig s;
  s.kind = SamplerConfig::Kind::top_k;
  s.seed = 3;
  std::vector<std::vector<Mat>> trace;
  EXPECT_EQ(model.sample(tokens, s).tokens.ids, model.sample(tokens, s, &trace).tokens.ids);
}

TEST_F(ArModelTest, GradientCheck) {
  const ArExample ex{tokens, {1, 4, 2, 0, 5}};
  nn::Rng rng(0);
  const auto r = testing::gradcheck(
      [&] {
        nn::Rng local(0);
        return model.loss(ex, 0.0, local);
      },
      model.params(), 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(ArTraining, OverfitsOneBatchWithPureTeacherForcing) {
  const auto vocab = testing::toy_vocab();
  auto cfg = testing::toy_ar_config(8, 16);
  cfg.width = 32;
  cfg.heads = 4;
  cfg.ff_hidden = 64;
  ArModel model(testing::toy_text_config(vocab.size(), 16), cfg, text::Injection::casim, 1);
  const std::vector<ArExample> batch = {
      {text::tokenize("a person walks forward slowly", vocab), {1, 1, 2, 3, 5}},
      {text::tokenize("a person raises the left arm", vocab), {7, 6, 6, 0}},
      {text::tokenize("the man jumps and waves his hand", vocab), {2, 4, 2, 4, 2, 4}},
  };
  nn::AdamConfig ac;
  ac.lr = 3e-3;
  nn::Adam opt(model.params(), ac);
  nn::Rng rng(0);
  TeacherForcing tf;
  tf.rate = 0.0;
  double loss = 0.0;
  for (int i = 0; i < 300; ++i) loss = model.train_step(batch, tf, opt, rng);
  EXPECT_LT(loss, 0.1);
}

}  // namespace
}  // namespace casim::ar
