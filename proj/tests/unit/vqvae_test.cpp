#include "casim/vq/vqvae.hpp"

#include "gradcheck.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>

namespace casim::vq {
namespace {

VqvaeConfig toy_config() {
  VqvaeConfig c;
  c.hidden = 8;
  c.latent = 8;
  c.codes = 8;
  return c;
}

TEST(Vqvae, EncodeShapes) {
  MotionVqvae m(toy_config(), 1);
  const auto a = m.encode(testing::random_motion(40, 1));
  EXPECT_EQ(a.latent.rows(), 10);
  EXPECT_EQ(a.pad, 0);
  const auto b = m.encode(testing::random_motion(42, 2));
  EXPECT_EQ(b.latent.rows(), 11);
  EXPECT_EQ(b.pad, 2);
  EXPECT_EQ(b.source_length, 42);
}

TEST(Vqvae, ZeroMotionWithZeroBiasesGivesZeroLatents) {
  MotionVqvae m(toy_config(), 3);
  for (auto& l : m.encoder_layers) l.bias.mutable_value().setZero();
  const auto z = m.encode(nn::Mat::Zero(24, data::kNumChannels));
  EXPECT_EQ(z.latent.value().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Vqvae, RejectsNonFiniteInput) {
  MotionVqvae m(toy_config(), 1);
  nn::Mat x = testing::random_motion(8, 1);
  x(3, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(m.encode(x), std::invalid_argument);
}

TEST(Codebook, NearestCodeAndTieBreak) {
  Codebook cb(2, 2);
  cb.mutable_codes() << 0.0, 0.0, 1.0, 1.0;
  nn::RowVec z(2);
  z << 0.1, 0.2;
  EXPECT_EQ(cb.quantize(z, 0.25).index, 0);
  z << 0.5, 0.5;
  EXPECT_EQ(cb.quantize(z, 0.25).index, 0);
  z << 1.0, 1.0;
  const auto r = cb.quantize(z, 0.25);
  EXPECT_EQ(r.index, 1);
  EXPECT_EQ(r.codebook_loss, 0.0);
  EXPECT_EQ(r.commitment_loss, 0.0);
}

TEST(Codebook, EmaMovesUsedCodeByOneMinusDecay) {
  Codebook cb(2, 2);
  nn::Mat init(2, 2);
  init << 0.0, 0.0, 1.0, 1.0;
  cb.initialize_from(init);
  nn::Mat z(1, 2);
  z << 3.0, -1.0;
  nn::Rng rng(0);
  cb.ema_update(z, {1}, 0.99, 1000, rng);
  EXPECT_NEAR(cb.codes()(1, 0), 0.99 * 1.0 + 0.01 * 3.0, 1e-12);
  EXPECT_NEAR(cb.codes()(1, 1), 0.99 * 1.0 + 0.01 * -1.0, 1e-12);
  EXPECT_NEAR(cb.codes()(0, 0), 0.0, 1e-12);
  EXPECT_EQ(cb.usage()(1, 0), 1.0);
}

TEST(Codebook, DeadCodesAreReseeded) {
  Codebook cb(3, 2);
  nn::Mat init(3, 2);
  init << 0.0, 0.0, 5.0, 5.0, 9.0, 9.0;
  cb.initialize_from(init);
  nn::Mat z(2, 2);
  z << 0.1, 0.1, -0.1, 0.0;
  nn::Rng rng(4);
  for (int i = 0; i < 3; ++i) cb.ema_update(z, {0, 0}, 0.99, 3, rng);
  for (int k = 1; k < 3; ++k) {
    const bool from_batch = cb.codes().row(k).isApprox(z.row(0)) || cb.codes().row(k).isApprox(z.row(1));
    EXPECT_TRUE(from_batch) << "code " << k;
  }
}

TEST(Vqvae, DecodeTokensShapesAndErrors) {
  MotionVqvae m(toy_config(), 1);
  MotionTokenSeq t;
  t.end_id = m.end_id();
  t.ids = {0, 1, 2, 3, 4, 5, 6, 7, 0, 1};
  EXPECT_EQ(m.decode_tokens(t).rows(), 40);
  t.ids.push_back(m.end_id());
  EXPECT_EQ(m.decode_tokens(t).rows(), 40);
  MotionTokenSeq end_only;
  end_only.ids = {m.end_id()};
  try {
    m.decode_tokens(end_only);
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("empty motion"), std::string::npos);
  }
  MotionTokenSeq early;
  early.ids = {1, m.end_id(), 2};
  EXPECT_THROW(m.decode_tokens(early), std::invalid_argument);
}

TEST(Vqvae, TokenizeDecodeRestoresSourceLength) {
  MotionVqvae m(toy_config(), 1);
  const auto tokens = m.tokenize(testing::random_motion(42, 3));
  EXPECT_EQ(tokens.ids.size(), 11u);
  EXPECT_EQ(m.decode_tokens(tokens).rows(), 42);
}

TEST(Vqvae, ZeroBatchFitsExactlyAtFirstStep) {
  MotionVqvae m(toy_config(), 5);
  for (auto& l : m.encoder_layers) l.bias.mutable_value().setZero();
  for (auto& l : m.decoder_layers) l.bias.mutable_value().setZero();
  nn::Adam opt(m.params(), {});
  nn::Rng rng(1);
  const std::vector<nn::Mat> batch(2, nn::Mat::Zero(16, data::kNumChannels));
  const auto losses = m.train_step(batch, opt, rng);
  EXPECT_EQ(losses.reconstruction, 0.0);
}

TEST(Vqvae, OverfitsOneBatch) {
  auto cfg = toy_config();
  cfg.hidden = 32;
  cfg.latent = 16;
  cfg.codes = 16;
  MotionVqvae m(cfg, 7);
  nn::AdamConfig ac;
  ac.lr = 3e-3;
  nn::Adam opt(m.params(), ac);
  nn::Rng rng(2);
  std::vector<nn::Mat> batch;
  for (std::uint64_t s = 0; s < 4; ++s) {
    batch.push_back(data::synthesize_motion({{{data::Action::wave, data::Side::left, data::Direction::none,
                                               data::Speed::normally, 32}}},
                                            s)
                        .frames);
  }
  const auto stats = data::Normalizer::fit({&batch[0], &batch[1], &batch[2], &batch[3]});
  for (auto& b : batch) b = stats.normalize(b);
  const double first = m.train_step(batch, opt, rng).reconstruction;
  double last = first;
  for (int i = 0; i < 500; ++i) last = m.train_step(batch, opt, rng).reconstruction;
  EXPECT_LT(last, first / 10.0) << first << " -> " << last;
}

TEST(Vqvae, StraightThroughGradientCheck) {
  MotionVqvae m(toy_config(), 9);
  const nn::Mat x = testing::random_motion(16, 4);
  nn::Rng rng(0);
  {
    nn::NoGradGuard guard;
    m.codebook().initialize_from(m.encode(testing::random_motion(64, 5)).latent.value());
  }
  // Forward value uses the codes; the numeric objective replaces quantization
  // by a fixed offset so its derivative is the straight-through gradient.
  nn::Mat offset;
  {
    nn::NoGradGuard guard;
    const auto z = m.encode(x).latent;
    offset = m.quantize(z).quantized.value() - z.value();
  }
  const auto analytic = [&] {
    const auto q = m.quantize(m.encode(x).latent);
    return nn::add(nn::mse_loss(m.decode(q.quantized), nn::constant(x)), q.commitment);
  };
  const auto numeric = [&] {
    const auto z = m.encode(x).latent;
    const auto q = m.quantize(z);
    const auto surrogate = nn::add(z, nn::constant(offset));
    return nn::add(nn::mse_loss(m.decode(surrogate), nn::constant(x)), q.commitment).item();
  };
  const auto r = testing::gradcheck(analytic, numeric, m.params(), 10);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GT(r.checked, 20);
}

}  // namespace
}  // namespace casim::vq
