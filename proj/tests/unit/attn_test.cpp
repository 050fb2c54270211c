#include "casim/attn/attention.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>

namespace casim::attn {
namespace {

AttentionTrace manual_trace(std::vector<std::string> tokens, const std::vector<Mat>& heads) {
  AttentionTrace t;
  t.generator = "diff";
  t.tokens = std::move(tokens);
  t.layers = {heads};
  return t;
}

Mat row_stochastic(int rows, int cols, std::uint64_t seed) {
  Mat m = testing::random_motion(rows, seed, cols).array().exp();
  for (int r = 0; r < rows; ++r) m.row(r) /= m.row(r).sum();
  return m;
}

int count(const std::string& text, const std::string& needle) {
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

class TraceTest : public ::testing::Test {
 protected:
  text::Vocabulary vocab = testing::toy_vocab();
  text::TextTokenSeq tokens = text::tokenize_batch({"a person walks", "someone raises the right arm then sits down"},
                                                   vocab)[0];
};

TEST_F(TraceTest, DiffusionShapeAndNonInterference) {
  diffusion::DiffusionModel model(testing::toy_text_config(vocab.size()),
                                  testing::toy_diffusion_config(diffusion::Variant::decoder), text::Injection::casim, 1);
  diffusion::SampleOptions opt;
  opt.seed = 5;
  diffusion::SampleResult with;
  const auto trace = record_attention(model, tokens, vocab, 12, opt, &with);
  const auto without = model.sample(tokens, 12, opt);
  EXPECT_TRUE((with.frames.array() == without.frames.array()).all());
  ASSERT_EQ(trace.layers.size(), 2u);
  EXPECT_EQ(trace.queries(), 12);
  EXPECT_EQ(static_cast<int>(trace.tokens.size()), tokens.valid_count());
  for (const auto& h : trace.layers.back()) {
    EXPECT_EQ(h.cols(), tokens.valid_count());
    EXPECT_LT((h.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-5);
  }
  EXPECT_EQ(trace.diffusion_step, 1);
}

TEST_F(TraceTest, PooledDecoderWeightsAreOne) {
  diffusion::DiffusionModel model(testing::toy_text_config(vocab.size()),
                                  testing::toy_diffusion_config(diffusion::Variant::decoder), text::Injection::cls, 1);
  const auto trace = record_attention(model, tokens, vocab, 9, {});
  for (const auto& layer : trace.layers) {
    for (const auto& h : layer) {
      ASSERT_EQ(h.cols(), 1);
      EXPECT_TRUE((h.array() == 1.0).all());
    }
  }
}

TEST_F(TraceTest, ArShapeAndNonInterference) {
  ar::ArModel model(testing::toy_text_config(vocab.size()), testing::toy_ar_config(), text::Injection::casim, 6);
  ar::SamplerConfig s;
  s.kind = ar::SamplerConfig::Kind::top_k;
  s.seed = 9;
  ar::SampleResult with;
  const auto trace = record_attention(model, tokens, vocab, s, &with, 4);
  const auto without = model.sample(tokens, s);
  EXPECT_EQ(with.tokens.ids, without.tokens.ids);
  ASSERT_GT(trace.queries(), 0);
  EXPECT_EQ(trace.frames_per_query, 4);
  EXPECT_EQ(trace.frame_range(2), std::make_pair(8, 12));
  for (const auto& layer : trace.layers) {
    for (const auto& h : layer) {
      EXPECT_EQ(h.cols(), tokens.valid_count());
      // Text columns hold part of the mass; motion keys hold the rest.
      EXPECT_TRUE((h.rowwise().sum().array() <= 1.0 + 1e-5).all());
      EXPECT_TRUE((h.array() >= 0.0).all());
    }
  }
}

TEST(Aggregate, MeanOfIdenticalHeadsEqualsHead) {
  const Mat h = row_stochastic(5, 4, 1);
  const auto t = manual_trace({"<bos>", "a", "b", "<eos>"}, {h, h, h, h});
  const auto mean = aggregate(t);
  AggregateMode one;
  one.kind = AggregateMode::Kind::per_head;
  one.head = 2;
  const auto single = aggregate(t, one);
  EXPECT_LT((mean.values - single.values).cwiseAbs().maxCoeff(), 1e-7f);
  EXPECT_LT((mean.values.cast<double>() - h).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Aggregate, RowsRenormalized) {
  Mat h = 0.5 * row_stochastic(6, 3, 2);
  h.row(4).setZero();
  const auto map = aggregate(manual_trace({"x", "y", "z"}, {h}));
  for (int r = 0; r < 6; ++r) EXPECT_NEAR(map.values.row(r).sum(), 1.0f, 1e-6f);
  EXPECT_NEAR(map.values(4, 1), 1.0f / 3.0f, 1e-7f);
  EXPECT_EQ(map.frames, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(TopWords, ConcentratedMass) {
  Mat h = Mat::Zero(3, 4);
  h.col(2).setOnes();
  const auto counts = top_k_words({manual_trace({"<bos>", "raises", "left", "arm"}, {h})}, 1);
  EXPECT_EQ(counts, (std::map<std::string, int>{{"left", 1}}));
}

TEST(TopWords, UniformTiesBreakAlphabetically) {
  const Mat h = Mat::Constant(2, 6, 1.0 / 6);
  const auto counts = top_k_words({manual_trace({"zeta", "walks", "arm", "left", "kicks", "bends"}, {h})}, 5);
  EXPECT_EQ(counts, (std::map<std::string, int>{{"arm", 1}, {"bends", 1}, {"kicks", 1}, {"left", 1}, {"walks", 1}}));
}

TEST(TopWords, StopwordsSpecialsAndRepeatedWords) {
  Mat h(1, 6);
  h << 0.3, 0.2, 0.1, 0.15, 0.15, 0.1;
  const auto t = manual_trace({"<bos>", "the", "arm", "arm", "left", "<eos>"}, {h});
  const auto counts = top_k_words({t}, 1);
  EXPECT_EQ(counts, (std::map<std::string, int>{{"arm", 1}}));
}

TEST(TopWords, FilterSelectsPrompts) {
  const Mat h = Mat::Constant(1, 2, 0.5);
  auto a = manual_trace({"walks", "slowly"}, {h});
  a.prompt = "a person walks slowly";
  auto b = manual_trace({"jumps", "high"}, {h});
  b.prompt = "a person jumps high";
  const auto all = top_k_words({a, b}, 1);
  EXPECT_EQ(all.size(), 2u);
  const auto walk = top_k_words({a, b}, 2, default_stopwords(), {},
                                [](const AttentionTrace& t) { return t.prompt.find("walk") != std::string::npos; });
  EXPECT_EQ(walk, (std::map<std::string, int>{{"slowly", 1}, {"walks", 1}}));
}

TEST(Export, CsvRoundTripIsExact) {
  testing::TempDir dir;
  const auto map = aggregate(manual_trace({"<bos>", "a,b", "say \"hi\"", "<eos>"}, {row_stochastic(7, 4, 3)}));
  write_csv(map, dir / "m.csv");
  const auto back = read_csv(dir / "m.csv");
  EXPECT_TRUE((back.values.array() == map.values.array()).all());
  EXPECT_EQ(back.tokens, map.tokens);
  EXPECT_EQ(back.frames, map.frames);
}

TEST(Export, SvgViews) {
  const auto map = aggregate(manual_trace({"x", "y", "z"}, {row_stochastic(5, 3, 4)}));
  EXPECT_EQ(count(heatmap_svg(map), "class=\"cell\""), 15);
  const auto empty = word_cloud_svg({});
  EXPECT_NE(empty.find("<svg"), std::string::npos);
  EXPECT_NE(empty.find("</svg>"), std::string::npos);
  EXPECT_EQ(count(empty, "class=\"word\""), 0);
  EXPECT_EQ(count(word_cloud_svg({{"arm", 3}, {"left", 1}}), "class=\"word\""), 2);
}

TEST(Export, TraceJsonRoundTrip) {
  testing::TempDir dir;
  auto t = manual_trace({"<bos>", "arm"}, {row_stochastic(3, 2, 5), row_stochastic(3, 2, 6)});
  t.prompt = "arm";
  t.diffusion_step = 4;
  save_trace(t, dir / "t.json");
  const auto back = load_trace(dir / "t.json");
  EXPECT_EQ(back.tokens, t.tokens);
  EXPECT_EQ(back.prompt, t.prompt);
  EXPECT_EQ(back.diffusion_step, 4);
  ASSERT_EQ(back.layers.size(), 1u);
  ASSERT_EQ(back.layers[0].size(), 2u);
  EXPECT_LT((back.layers[0][1] - t.layers[0][1]).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace casim::attn
