#include "casim/diffusion/diffusion.hpp"

#include "gradcheck.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace casim::diffusion {

void PrintTo(Variant v, std::ostream* os) { *os << to_string(v); }

namespace {

using nn::Mat;

TEST(Schedule, ShapeAndMonotonicity) {
  const auto s = make_schedule(50);
  ASSERT_EQ(s.beta.size(), 51u);
  EXPECT_EQ(s.alpha_bar[0], 1.0);
  for (int t = 1; t <= 50; ++t) {
    EXPECT_GT(s.beta[t], 0.0);
    EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
  }
  EXPECT_GT(s.alpha_bar[1], s.alpha_bar[50]);
}

TEST(Schedule, AlphaBarIsProductOfOneMinusBeta) {
  const auto s = make_schedule(50);
  long double prod = 1.0L;
  for (int t = 1; t <= 50; ++t) {
    prod *= 1.0L - static_cast<long double>(s.beta[t]);
    EXPECT_NEAR(s.alpha_bar[t], static_cast<double>(prod), 1e-10) << t;
  }
}

TEST(Schedule, FollowsCosineShape) {
  const auto s = make_schedule(50);
  const auto f = [](double t) {
    const double c = std::cos((t / 50.0 + 0.008) / 1.008 * std::numbers::pi / 2.0);
    return c * c;
  };
  for (int t = 1; t < 50; ++t) EXPECT_NEAR(s.alpha_bar[t], f(t) / f(0), 1e-6) << t;
}

TEST(QSample, EndpointIdentities) {
  const Mat x0 = testing::random_motion(10, 1);
  const Mat noise = testing::random_motion(10, 2);
  EXPECT_TRUE((q_sample(x0, 1.0, noise).array() == x0.array()).all());
  EXPECT_TRUE((q_sample(x0, 0.0, noise).array() == noise.array()).all());
  EXPECT_TRUE((q_sample(x0, 0, noise, make_schedule(50)).array() == x0.array()).all());
}

TEST(QSample, MonteCarloMoments) {
  const auto s = make_schedule(50);
  const int step = 20;
  const double ab = s.alpha_bar[step];
  Mat x0(1, 3);
  x0 << 1.5, -2.0, 0.25;
  const int n = 10000;
  nn::Rng rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVector3d sum = Eigen::RowVector3d::Zero(), sq = Eigen::RowVector3d::Zero();
  for (int i = 0; i < n; ++i) {
    Mat noise(1, 3);
    for (int c = 0; c < 3; ++c) noise(0, c) = normal(rng);
    const Mat x = q_sample(x0, step, noise, s);
    sum += x.row(0);
    sq += x.row(0).cwiseProduct(x.row(0));
  }
  const double var = 1.0 - ab;
  for (int c = 0; c < 3; ++c) {
    const double mean = sum(c) / n;
    const double v = sq(c) / n - mean * mean;
    EXPECT_NEAR(mean, std::sqrt(ab) * x0(0, c), 3.0 * std::sqrt(var / n));
    EXPECT_NEAR(v, var, 3.0 * var * std::sqrt(2.0 / (n - 1)));
  }
}

TEST(Variant, Parse) {
  EXPECT_EQ(parse_variant("enc"), Variant::encoder);
  EXPECT_EQ(parse_variant("decoder"), Variant::decoder);
  EXPECT_THROW(parse_variant("unet"), std::invalid_argument);
}

class DenoiserTest : public ::testing::TestWithParam<Variant> {
 protected:
  text::Vocabulary vocab = testing::toy_vocab();
  DiffusionModel model{testing::toy_text_config(vocab.size()), testing::toy_diffusion_config(GetParam()),
                       text::Injection::casim, 6};
  text::TextTokenSeq tokens = text::tokenize("someone raises the right arm then sits down", vocab);
};

TEST_P(DenoiserTest, OutputHasMotionLength) {
  const Mat x = testing::random_motion(13, 1);
  EXPECT_EQ(model.denoiser().denoise(nn::constant(x), 5, model.condition(tokens)).rows(), 13);
}

TEST_P(DenoiserTest, SwappingTextTokensChangesPrediction) {
  auto swapped = tokens;
  std::swap(swapped.ids[2], swapped.ids[5]);
  const Mat x = testing::random_motion(12, 2);
  const Mat a = model.denoiser().denoise(nn::constant(x), 5, model.condition(tokens)).value();
  const Mat b = model.denoiser().denoise(nn::constant(x), 5, model.condition(swapped)).value();
  EXPECT_GT((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST_P(DenoiserTest, PadContentIsInvisible) {
  auto batch = text::tokenize_batch({"a person walks", "someone raises the right arm then sits down"}, vocab);
  const Mat x = testing::random_motion(12, 3);
  const Mat before = model.denoiser().denoise(nn::constant(x), 7, model.condition(batch[0])).value();
  for (std::size_t i = 0; i < batch[0].ids.size(); ++i) {
    if (!batch[0].valid[i]) batch[0].ids[i] = vocab.id("jumps");
  }
  const Mat after = model.denoiser().denoise(nn::constant(x), 7, model.condition(batch[0])).value();
  EXPECT_TRUE((before.array() == after.array()).all());
}

TEST_P(DenoiserTest, CaptureIsMotionByText) {
  std::vector<nn::LayerAttention> cap;
  model.denoiser().denoise(nn::constant(testing::random_motion(9, 1)), 3, model.condition(tokens), &cap);
  ASSERT_EQ(cap.size(), 2u);
  for (const auto& layer : cap) {
    for (const auto& h : layer.heads) {
      EXPECT_EQ(h.rows(), 9);
      EXPECT_EQ(h.cols(), tokens.length());
    }
  }
}

TEST_P(DenoiserTest, ZeroGuidanceIsConditionalPrediction) {
  const Mat x = testing::random_motion(10, 4);
  const auto cond = model.condition(tokens);
  const Mat guided = model.guided_x0(x, 9, cond, 0.0);
  Mat plain;
  {
    nn::NoGradGuard guard;
    plain = model.denoiser().denoise(nn::constant(x), 9, cond).value();
  }
  ASSERT_LT(plain.cwiseAbs().maxCoeff(), model.denoiser().config().clip);
  EXPECT_TRUE((guided.array() == plain.array()).all());
}

TEST_P(DenoiserTest, FinalStepIgnoresRng) {
  const Mat x = testing::random_motion(10, 5);
  const auto cond = model.condition(tokens);
  nn::Rng a(1), b(2);
  const Mat ya = model.p_sample_step(x, 1, cond, 2.5, a);
  const Mat yb = model.p_sample_step(x, 1, cond, 2.5, b);
  EXPECT_TRUE((ya.array() == yb.array()).all());
  nn::Rng c(1), d(2);
  EXPECT_FALSE((model.p_sample_step(x, 2, cond, 2.5, c).array() == model.p_sample_step(x, 2, cond, 2.5, d).array()).all());
}

TEST_P(DenoiserTest, FixedSeedSamplingIsReproducible) {
  SampleOptions opt;
  opt.seed = 42;
  const auto a = model.sample(tokens, 16, opt);
  const auto b = model.sample(tokens, 16, opt);
  EXPECT_EQ(a.steps_run, model.schedule().steps);
  EXPECT_TRUE((a.frames.array() == b.frames.array()).all());
  std::vector<nn::LayerAttention> trace;
  const auto c = model.sample(tokens, 16, opt, &trace);
  EXPECT_TRUE((a.frames.array() == c.frames.array()).all());
}

TEST_P(DenoiserTest, ZeroHeadLossIsMeanSquare) {
  model.denoiser().frame_out.zero();
  const Mat x0 = testing::random_motion(11, 8);
  const Mat noise = testing::random_motion(11, 9);
  const double loss = model.loss({tokens, x0}, 7, noise, false).item();
  EXPECT_NEAR(loss, x0.array().square().mean(), 1e-12);
}

TEST_P(DenoiserTest, CondDropRate) {
  nn::Adam opt(model.params(), {});
  nn::Rng rng(0);
  std::vector<DiffusionExample> batch(6, {tokens, testing::random_motion(8, 1)});
  model.train_step(batch, opt, rng, 0.0);
  EXPECT_EQ(model.last_dropped(), 0);
  model.train_step(batch, opt, rng, 1.0);
  EXPECT_EQ(model.last_dropped(), 6);
}

TEST_P(DenoiserTest, GradientCheck) {
  const Mat x0 = testing::random_motion(8, 12);
  const Mat noise = testing::random_motion(8, 13);
  const auto r = testing::gradcheck([&] { return model.loss({tokens, x0}, 9, noise, false); }, model.params(), 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST_P(DenoiserTest, NullConditionGradientCheck) {
  const Mat x0 = testing::random_motion(8, 14);
  const Mat noise = testing::random_motion(8, 15);
  const auto r = testing::gradcheck([&] { return model.loss({tokens, x0}, 4, noise, true); }, model.params(), 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Variants, DenoiserTest, ::testing::Values(Variant::encoder, Variant::decoder),
                         [](const auto& info) { return to_string(info.param); });

TEST(Denoiser, PooledDecoderCrossAttentionIsOne) {
  const auto vocab = testing::toy_vocab();
  DiffusionModel model(testing::toy_text_config(vocab.size()), testing::toy_diffusion_config(Variant::decoder),
                       text::Injection::cls, 2);
  std::vector<nn::LayerAttention> cap;
  const auto cond = model.condition(text::tokenize("a person walks forward slowly", vocab));
  ASSERT_EQ(cond.valid.size(), 1u);
  model.denoiser().denoise(nn::constant(testing::random_motion(7, 1)), 5, cond, &cap);
  for (const auto& layer : cap) {
    for (const auto& h : layer.heads) EXPECT_TRUE((h.array() == 1.0).all());
  }
}

TEST(DiffusionTraining, OverfitsOneMotion) {
  const auto vocab = testing::toy_vocab();
  auto cfg = testing::toy_diffusion_config(Variant::decoder, 16);
  cfg.width = 32;
  cfg.heads = 4;
  cfg.ff_hidden = 64;
  cfg.steps = 50;
  DiffusionModel model(testing::toy_text_config(vocab.size(), 16), cfg, text::Injection::casim, 3);
  const auto tokens = text::tokenize("a person raises the left arm", vocab);
  const auto motion = data::synthesize_reference({{{data::Action::raise_arm, data::Side::left,
                                                    data::Direction::none, data::Speed::normally, 20}}});
  const auto stats = data::Normalizer::fit({&motion.frames});
  const Mat x0 = stats.normalize(motion.frames);
  nn::AdamConfig ac;
  ac.lr = 2e-3;
  nn::Adam opt(model.params(), ac);
  nn::Rng rng(0);
  const std::vector<DiffusionExample> batch = {{tokens, x0}};
  for (int i = 0; i < 2000; ++i) model.train_step(batch, opt, rng);
  SampleOptions so;
  so.seed = 1;
  const Mat out = model.sample(tokens, 20, so).frames;
  const double mse = (out - x0).array().square().colwise().mean().mean();
  EXPECT_LT(mse, 0.05);
}

}  // namespace
}  // namespace casim::diffusion
