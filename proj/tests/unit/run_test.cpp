#include "casim/experiment/run.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>

namespace casim::experiment {
namespace {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), {}};
}

io::ExperimentConfig tiny(const std::filesystem::path& out) {
  io::ExperimentConfig c;
  c.out = out.string();
  c.data.count = 240;
  c.data.max_actions = 2;
  c.text.width = 8;
  c.text.heads = 2;
  c.text.ff_hidden = 16;
  c.text.blocks = 1;
  c.vqvae.hidden = 8;
  c.vqvae.latent = 8;
  c.vqvae.codes = 8;
  c.vqvae.steps = 10;
  c.vqvae.batch = 4;
  c.ar.width = 8;
  c.ar.blocks = 1;
  c.ar.heads = 2;
  c.ar.ff_hidden = 16;
  c.ar.steps = 10;
  c.ar.batch = 4;
  c.diff.width = 8;
  c.diff.blocks = 1;
  c.diff.heads = 2;
  c.diff.ff_hidden = 16;
  c.diff.steps = 4;
  c.diff.train_steps = 10;
  c.diff.batch = 4;
  c.matcher.width = 16;
  c.matcher.steps = 10;
  c.matcher.batch = 8;
  c.matcher.eval_every = 5;
  c.eval.repeats = 2;
  return c;
}

TEST(RunExperiment, AblationGridIsDeterministic) {
  testing::TempDir a, b;
  RunOptions opt;
  opt.ablation = true;
  opt.attention_samples = 1;
  const auto ra = run_experiment(tiny(a.path()), opt);
  ASSERT_TRUE(ra.ok()) << ra.error;
  ASSERT_EQ(ra.cells.size(), 4u);
  for (const auto* f : {"ar", "diff"}) {
    for (const auto* i : {"casim", "cls"}) {
      ASSERT_EQ(ra.find(f, i).size(), 1u) << f << i;
      EXPECT_TRUE(std::filesystem::exists(ra.find(f, i).front()->report_file));
    }
  }
  EXPECT_TRUE(std::filesystem::exists(ra.dir / "reports" / "summary.txt"));
  EXPECT_TRUE(std::filesystem::exists(ra.dir / "attention" / "diff-casim-s0" / "sample0.csv"));
  const auto manifest = nlohmann::json::parse(read_text(ra.dir / "manifest.json"));
  EXPECT_EQ(manifest.at("config_hash"), ra.config_hash);
  EXPECT_TRUE(manifest.at("failed_stage").is_null());
  for (const auto& o : manifest.at("outputs")) EXPECT_TRUE(std::filesystem::exists(ra.dir / o.at("path").get<std::string>()));

  const auto rb = run_experiment(tiny(b.path()), opt);
  ASSERT_TRUE(rb.ok()) << rb.error;
  for (std::size_t i = 0; i < ra.cells.size(); ++i) {
    EXPECT_EQ(read_text(ra.cells[i].report_file), read_text(rb.cells[i].report_file)) << ra.cells[i].report_file;
  }
}

TEST(RunExperiment, StageFailureIsRecorded) {
  testing::TempDir dir;
  auto c = tiny(dir.path());
  c.ar.teacher_forcing = "sometimes";
  const auto r = run_experiment(c, {});
  ASSERT_FALSE(r.ok());
  ASSERT_TRUE(r.failed_stage.has_value());
  EXPECT_EQ(*r.failed_stage, "train-ar-casim-s0");
  EXPECT_TRUE(std::filesystem::exists(r.dir / "checkpoints" / "vqvae.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(r.dir / "checkpoints" / "matcher.ckpt"));
  const auto manifest = nlohmann::json::parse(read_text(r.dir / "manifest.json"));
  EXPECT_EQ(manifest.at("failed_stage"), "train-ar-casim-s0");
  EXPECT_EQ(manifest.at("stages").back().at("status"), "failed");
}

TEST(RunExperiment, HashSeparatesOutputDirectories) {
  testing::TempDir dir;
  auto c = tiny(dir.path());
  const auto h = io::config_hash(c);
  c.diff.guidance = 2.0;
  EXPECT_NE(io::config_hash(c), h);
  EXPECT_EQ(cell_name("ar", "cls", 2), "ar-cls-s2");
}

}  // namespace
}  // namespace casim::experiment
