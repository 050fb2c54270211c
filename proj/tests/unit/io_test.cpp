#include "casim/experiment/models.hpp"
#include "casim/io/checkpoint.hpp"
#include "casim/io/config.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

namespace casim {
namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

io::Checkpoint sample_checkpoint() {
  io::Checkpoint c;
  c.kind = "diff";
  c.config_json = R"({"a":1})";
  c.step = 42;
  c.rng_state = "state";
  c.tensors = {{"a.weight", testing::random_motion(3, 1, 4)}, {"b.bias", nn::Mat::Constant(1, 2, -0.5)}};
  return c;
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  testing::TempDir dir;
  save_checkpoint(sample_checkpoint(), dir / "a.ckpt");
  const auto loaded = io::load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.kind, "diff");
  EXPECT_EQ(loaded.step, 42u);
  EXPECT_EQ(loaded.rng_state, "state");
  ASSERT_EQ(loaded.tensors.size(), 2u);
  EXPECT_TRUE((loaded.tensors[0].second.array() == sample_checkpoint().tensors[0].second.array()).all());
  save_checkpoint(loaded, dir / "b.ckpt");
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  testing::TempDir dir;
  save_checkpoint(sample_checkpoint(), dir / "a.ckpt");
  auto bytes = read_bytes(dir / "a.ckpt");
  {
    std::ofstream os(dir / "bad.ckpt", std::ios::binary);
    os << "NOTACKPT" << bytes.substr(8);
  }
  EXPECT_THROW(io::load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  {
    std::ofstream os(dir / "short.ckpt", std::ios::binary);
    os << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW(io::load_checkpoint(dir / "short.ckpt"), std::runtime_error);
  EXPECT_THROW(io::load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
}

TEST(Checkpoint, ShapeMismatchIsAnError) {
  nn::Rng rng(1);
  const nn::Linear layer(3, 4, rng);
  nn::ParamList params;
  layer.register_params(params, "fc.");
  io::Checkpoint c;
  io::collect_tensors(params, c);
  const nn::Linear other(3, 5, rng);
  nn::ParamList other_params;
  other.register_params(other_params, "fc.");
  EXPECT_THROW(io::restore_tensors(c, other_params), std::runtime_error);
  c.tensors.emplace_back("zzz", nn::Mat::Zero(1, 1));
  EXPECT_THROW(io::restore_tensors(c, params), std::runtime_error);
}

TEST(Config, JsonRoundTripAndDefaults) {
  io::ExperimentConfig c;
  c.family = "diff";
  c.seeds = {3, 4};
  c.diff.guidance = 1.5;
  const auto json = io::config_to_json(c);
  const auto back = io::config_from_json(json);
  EXPECT_EQ(io::config_to_json(back), json);
  EXPECT_EQ(io::config_to_json(io::config_from_json("{}")), io::config_to_json(io::ExperimentConfig{}));
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(io::config_from_json(R"({"diff": {"stepz": 3}})"), std::invalid_argument);
  EXPECT_THROW(io::config_from_json(R"({"colour": 1})"), std::invalid_argument);
  EXPECT_THROW(io::config_from_json(R"({"diff": {"steps": "many"}})"), std::invalid_argument);
}

TEST(Config, Overrides) {
  io::ExperimentConfig c;
  io::apply_override(c, "diff.steps=20");
  io::apply_override(c, "ar.teacher_forcing=0.3");
  io::apply_override(c, "family=diff");
  io::apply_override(c, "seeds=[1,2,3]");
  EXPECT_EQ(c.diff.steps, 20);
  EXPECT_EQ(c.ar.teacher_forcing, "0.3");
  EXPECT_EQ(c.family, "diff");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_THROW(io::apply_override(c, "diff.nope=1"), std::invalid_argument);
  EXPECT_THROW(io::apply_override(c, "no_equals"), std::invalid_argument);
}

TEST(Config, HashTracksEveryField) {
  const io::ExperimentConfig base;
  const auto h = io::config_hash(base);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(io::config_hash(base), h);
  const std::vector<std::string> edits = {
      "family=diff",         "inject=cls",       "seeds=[0,1]",        "out=\"x\"",          "data.count=10",
      "data.seed=9",         "data.max_actions=2", "text.width=32",     "text.tap=post_projection",
      "vqvae.codes=32",      "vqvae.lr=0.01",    "ar.teacher_forcing=0.2", "ar.sampler=top_k", "ar.top_k=3",
      "diff.variant=enc",    "diff.guidance=1.0", "diff.cond_drop=0.2", "matcher.patience=3", "eval.repeats=5",
      "eval.pool=16",        "eval.diversity_pairs=50", "eval.max_entries=10", "eval.seed=7"};
  for (const auto& e : edits) {
    io::ExperimentConfig c;
    io::apply_override(c, e);
    EXPECT_NE(io::config_hash(c), h) << e;
  }
  EXPECT_EQ(io::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(io::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

class ModelFileTest : public ::testing::Test {
 protected:
  ModelFileTest() {
    cfg.text.width = 8;
    cfg.text.heads = 2;
    cfg.text.ff_hidden = 16;
    cfg.vqvae.hidden = 8;
    cfg.vqvae.latent = 8;
    cfg.vqvae.codes = 6;
    cfg.ar.width = 8;
    cfg.ar.blocks = 1;
    cfg.ar.heads = 2;
    cfg.ar.ff_hidden = 16;
    cfg.diff.width = 8;
    cfg.diff.blocks = 1;
    cfg.diff.heads = 2;
    cfg.diff.ff_hidden = 16;
    cfg.matcher.width = 16;
  }
  void expect_stable(const std::filesystem::path& a, const std::string& kind) {
    const auto loaded = experiment::load_model(a, kind);
    const auto b = dir / ("again-" + kind + ".ckpt");
    if (kind == "vqvae") experiment::save_vqvae(*loaded.vqvae, loaded.snapshot, b);
    if (kind == "ar") experiment::save_ar(*loaded.ar, *loaded.vqvae, loaded.snapshot, b);
    if (kind == "diff") experiment::save_diffusion(*loaded.diffusion, loaded.snapshot, b);
    if (kind == "matcher") experiment::save_matcher(*loaded.matcher, loaded.snapshot, b);
    EXPECT_EQ(read_bytes(a), read_bytes(b)) << kind;
  }
  io::ExperimentConfig cfg;
  testing::TempDir dir;
};

TEST_F(ModelFileTest, SaveLoadSaveIsByteIdentical) {
  const auto& ds = testing::small_dataset();
  const auto snap = experiment::make_snapshot(ds, cfg, "casim", 1);
  const vq::MotionVqvae vqm(experiment::vqvae_config(cfg), 1);
  experiment::save_vqvae(vqm, snap, dir / "vq.ckpt");
  expect_stable(dir / "vq.ckpt", "vqvae");

  const ar::ArModel arm(experiment::text_config(cfg, ds.vocab.size()), experiment::ar_config(cfg, cfg.vqvae.downsample),
                        text::Injection::casim, 2);
  experiment::save_ar(arm, vqm, snap, dir / "ar.ckpt");
  expect_stable(dir / "ar.ckpt", "ar");

  const diffusion::DiffusionModel dm(experiment::text_config(cfg, ds.vocab.size()), experiment::diffusion_config(cfg),
                                     text::Injection::casim, 3);
  experiment::save_diffusion(dm, snap, dir / "diff.ckpt");
  expect_stable(dir / "diff.ckpt", "diff");

  const eval::Matcher mm(experiment::matcher_config(cfg, ds.vocab.size()), 4);
  experiment::save_matcher(mm, snap, dir / "m.ckpt");
  expect_stable(dir / "m.ckpt", "matcher");
}

TEST_F(ModelFileTest, LoadedDiffusionSamplesIdentically) {
  const auto& ds = testing::small_dataset();
  const diffusion::DiffusionModel dm(experiment::text_config(cfg, ds.vocab.size()), experiment::diffusion_config(cfg),
                                     text::Injection::cls, 3);
  experiment::save_diffusion(dm, experiment::make_snapshot(ds, cfg, "cls", 3), dir / "diff.ckpt");
  const auto loaded = experiment::load_model(dir / "diff.ckpt");
  EXPECT_EQ(loaded.kind, "diff");
  EXPECT_EQ(loaded.snapshot.inject, "cls");
  const auto tokens = text::tokenize(ds.test[0].prompts.front(), ds.vocab);
  diffusion::SampleOptions opt;
  opt.seed = 8;
  EXPECT_TRUE((dm.sample(tokens, 20, opt).frames.array() == loaded.diffusion->sample(tokens, 20, opt).frames.array()).all());
  EXPECT_THROW(experiment::load_model(dir / "diff.ckpt", "ar"), std::runtime_error);
}

}  // namespace
}  // namespace casim
