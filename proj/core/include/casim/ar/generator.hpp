#pragma once

#include "casim/nn/layers.hpp"
#include "casim/nn/optim.hpp"
#include "casim/text/encoder.hpp"
#include "casim/vq/vqvae.hpp"

#include <optional>
#include <span>
#include <vector>

namespace casim::ar {

using nn::BoolMat;
using nn::Mat;
using nn::Var;

struct ArConfig {
  int codes = 64;  // K; END = K, PAD = K + 1
  int text_width = 64;
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int ff_hidden = 128;
  int max_text = text::kDefaultMaxLength;
  int max_motion_tokens = data::kMaxFrames / 4;
};

// (L + M) x (L + M) mask over the sequence C + M. Text rows see the non-PAD
// text columns only; motion row i sees every non-PAD text column and motion
// columns <= i. PAD rows and PAD columns are all-false.
BoolMat build_ar_mask(int text_length, int motion_length, const std::vector<bool>& text_valid);

// Index of the row whose output predicts the first motion token: the last
// non-PAD text position.
int first_prediction_row(const std::vector<bool>& text_valid);

// GPT-style stack over the concatenation of projected text rows and motion
// token embeddings. Segment embeddings mark the two spans.
class ArTransformer {
 public:
  ArTransformer(const ArConfig& config, std::uint64_t seed);

  // Logits (L + M) x (K + 1) over codes + END. When `capture` is non-null,
  // one entry per block is appended holding the per-head attention maps.
  Var forward(const text::TextEmbeddingSeq& text, std::span<const int> motion_prefix,
              std::vector<nn::LayerAttention>* capture = nullptr) const;

  const ArConfig& config() const { return config_; }
  int end_id() const { return config_.codes; }
  int pad_id() const { return config_.codes + 1; }
  nn::ParamList params() const;

  nn::Linear text_proj;
  Var token_embedding;    // (K + 2) x d
  Var segment_embedding;  // 2 x d
  Var position_embedding;
  std::vector<nn::SelfAttentionBlock> blocks;
  nn::LayerNorm final_norm;
  nn::Linear head;  // d x (K + 1)

 private:
  ArConfig config_;
};

// Probability with which each ground-truth input token is swapped for a
// uniform random code during training.
struct TeacherForcing {
  enum class Kind { fixed, uniform } kind = Kind::fixed;
  double rate = 0.5;

  double draw(nn::Rng& rng) const;
};

TeacherForcing parse_teacher_forcing(const std::string& s);  // "0.5" or "uniform"

// Replaces each token with a uniform random code (never END) with probability `rate`.
std::vector<int> corrupt_tokens(std::span<const int> tokens, int codes, double rate, nn::Rng& rng);

struct ArExample {
  text::TextTokenSeq text;
  std::vector<int> motion;  // ground-truth code ids, no END
};

struct SamplerConfig {
  enum class Kind { greedy, top_k } kind = Kind::greedy;
  int top_k = 5;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct SampleResult {
  vq::MotionTokenSeq tokens;  // END appended when emitted
  bool empty = false;         // END was the first emission
  bool hit_cap = false;
};

// Text encoder + transformer trained jointly.
class ArModel {
 public:
  ArModel(const text::TextEncoderConfig& text_config, const ArConfig& config, text::Injection inject,
          std::uint64_t seed);

  text::TextEmbeddingSeq condition(const text::TextTokenSeq& tokens) const;

  // Cross-entropy over the motion predictions + END, averaged over the batch.
  double train_step(const std::vector<ArExample>& batch, const TeacherForcing& tf, nn::Adam& optimizer,
                    nn::Rng& rng);
  // Loss without an update (validation / gradient checks).
  Var loss(const ArExample& example, double corruption_rate, nn::Rng& rng) const;

  // Samples until END or the token cap. When `trace` is given, each block's
  // attention row for every emitting query is appended (row per emission).
  SampleResult sample(const text::TextTokenSeq& tokens, const SamplerConfig& sampler,
                      std::vector<std::vector<Mat>>* trace = nullptr) const;

  nn::ParamList params() const;
  text::Injection injection() const { return inject_; }
  const text::TextEncoder& encoder() const { return encoder_; }
  text::TextEncoder& encoder() { return encoder_; }
  const ArTransformer& transformer() const { return transformer_; }
  ArTransformer& transformer() { return transformer_; }

 private:
  text::TextEncoder encoder_;
  ArTransformer transformer_;
  text::Injection inject_;
};

// Picks the next token from a logit row.
int pick_token(const nn::RowVec& logits, const SamplerConfig& sampler, nn::Rng& rng);

}  // namespace casim::ar
