#pragma once

#include "casim/data/dataset.hpp"
#include "casim/eval/metrics.hpp"
#include "casim/nn/layers.hpp"
#include "casim/text/encoder.hpp"

#include <functional>
#include <string>
#include <vector>

namespace casim::eval {

using nn::Var;

inline constexpr int kEmbedDim = 32;

struct MatcherConfig {
  int vocab_size = 0;
  int width = 64;
  int embed = kEmbedDim;
  int text_blocks = 1;
  int motion_blocks = 2;
  int heads = 4;
  int ff_hidden = 128;
  int patch = 4;  // frames folded into one motion token
  int max_length = text::kDefaultMaxLength;
  double temperature = 0.07;
};

// Text-motion matching network: two sequence encoders into a shared
// embedding space, trained with a symmetric contrastive loss.
class Matcher {
 public:
  Matcher(const MatcherConfig& config, std::uint64_t seed);

  Var embed_text(const text::TextTokenSeq& tokens) const;  // 1 x e, unnormalized
  Var embed_motion(const Mat& normalized_frames) const;    // 1 x e, unnormalized

  // L2-normalized feature rows; these are what every metric consumes.
  Mat text_features(const std::vector<text::TextTokenSeq>& tokens) const;
  Mat motion_features(const std::vector<Mat>& motions) const;

  // Symmetric InfoNCE over a batch of matched pairs.
  Var contrastive_loss(const std::vector<text::TextTokenSeq>& texts, const std::vector<const Mat*>& motions) const;

  double temperature() const;
  const MatcherConfig& config() const { return config_; }
  nn::ParamList params() const;

  text::TextEncoder text_encoder;
  nn::Linear text_head;
  nn::Linear motion_in;
  std::vector<nn::SelfAttentionBlock> motion_blocks;
  nn::LayerNorm motion_norm;
  nn::Linear motion_head;
  Var log_scale;  // log(1 / temperature)

 private:
  MatcherConfig config_;
  Mat positions_;
};

struct MatcherTrainConfig {
  int steps = 3000;
  int batch = 32;
  double lr = 1e-3;
  int eval_every = 100;
  int patience = 8;
  std::uint64_t seed = 0;
};

struct MatcherTrainResult {
  double best_valid_top1 = 0.0;
  int steps_run = 0;
  bool early_stopped = false;
  std::vector<std::pair<int, double>> history;  // (step, validation top1)
};

using ProgressFn = std::function<void(const std::string&)>;

// Trains with early stopping on validation Top1 (pool 32) and restores the
// best weights. Throws if embeddings collapse.
MatcherTrainResult train_matcher(Matcher& matcher, const data::Dataset& dataset, const MatcherTrainConfig& config,
                                 const ProgressFn& progress = {});

// Mean pairwise distance between feature rows.
double mean_pairwise_distance(const Mat& features);

// Produces normalized frames for a test entry and prompt; throws on failure.
using MotionGenerator =
    std::function<Mat(const data::Sample& entry, const std::string& prompt, std::uint64_t seed)>;

struct EvalOptions {
  int repeats = 20;
  std::uint64_t seed = 0;
  int pool = 32;
  int diversity_pairs = 100;
  int max_entries = 0;  // 0 = whole split
};

struct RepeatMetrics {
  double top1 = 0.0, top2 = 0.0, top3 = 0.0;
  double fid = 0.0;
  double mm_dist = 0.0;
  double diversity = 0.0;
  bool fid_regularized = false;
  int skipped = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double ci95 = 0.0;  // NaN when not applicable
};

struct EvalReport {
  std::string label;
  std::vector<RepeatMetrics> repeats;
  MetricSummary top1, top2, top3, fid, mm_dist, diversity;
  int skipped_total = 0;
  std::vector<std::string> skip_reasons;
  int pool = 32;
  int diversity_pairs = 100;
  std::uint64_t seed = 0;
  int entries = 0;
};

EvalReport evaluate_model(const MotionGenerator& generator, const Matcher& matcher,
                          const std::vector<data::Sample>& test, const text::Vocabulary& vocab,
                          const EvalOptions& options, const std::string& label = "");

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
// Aligned table with one row per report, mean +/- CI per column.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace casim::eval
