#pragma once

#include "casim/data/motion.hpp"
#include "casim/nn/layers.hpp"
#include "casim/nn/optim.hpp"
#include "casim/text/encoder.hpp"

#include <optional>
#include <vector>

namespace casim::diffusion {

using nn::Mat;
using nn::Var;

// Cosine noise schedule. Tables are indexed by step 0..N where step 0 is the
// clean sample (alpha_bar = 1) and steps 1..N are the sampling steps.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> beta;       // beta[0] = 0
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product
  std::vector<double> posterior_variance;
  std::vector<double> posterior_c0;  // coefficient on x0 in the posterior mean
  std::vector<double> posterior_ct;  // coefficient on x_t
};

DiffusionSchedule make_schedule(int steps, double offset = 0.008);

Mat q_sample(const Mat& x0, int step, const Mat& noise, const DiffusionSchedule& schedule);
// Same with an explicit alpha_bar in [0, 1].
Mat q_sample(const Mat& x0, double alpha_bar, const Mat& noise);
Mat posterior_mean(const Mat& x0_hat, const Mat& x_t, int step, const DiffusionSchedule& schedule);

enum class Variant { encoder, decoder };
std::string to_string(Variant v);
Variant parse_variant(const std::string& s);  // "enc"/"encoder", "dec"/"decoder"

struct DiffusionConfig {
  int channels = data::kNumChannels;
  int text_width = 64;
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int ff_hidden = 128;
  int max_frames = data::kMaxFrames;
  Variant variant = Variant::decoder;
  int steps = 50;
  double guidance = 2.5;
  double cond_drop = 0.1;
  double clip = 6.0;
};

// Text rows in denoiser width (before the timestep embedding is added).
struct DenoiserCondition {
  Var rows;
  std::vector<bool> valid;
};

class Denoiser {
 public:
  Denoiser(const DiffusionConfig& config, std::uint64_t seed);

  DenoiserCondition project(const text::TextEmbeddingSeq& text) const;
  DenoiserCondition null_condition() const;

  // x_t (T x D) -> predicted clean motion (T x D). `capture` receives one
  // entry per block with the (motion query x text key) attention per head.
  Var denoise(const Var& x_t, int step, const DenoiserCondition& cond,
              std::vector<nn::LayerAttention>* capture = nullptr) const;

  const DiffusionConfig& config() const { return config_; }
  nn::ParamList params() const;

  nn::Linear frame_in;
  nn::Linear text_proj;
  nn::Linear time_in, time_out;
  Var null_embedding;  // 1 x d
  std::vector<nn::SelfAttentionBlock> encoder_blocks;
  std::vector<nn::CrossAttentionBlock> decoder_blocks;
  nn::LayerNorm final_norm;
  nn::Linear frame_out;

 private:
  Var timestep_embedding(int step) const;

  DiffusionConfig config_;
  Mat positions_;
};

struct DiffusionExample {
  text::TextTokenSeq text;
  Mat motion;  // normalized frames
};

struct SampleOptions {
  std::uint64_t seed = 0;
  std::optional<double> guidance;  // default: config
  int capture_step = 1;            // step whose attention is recorded
};

struct SampleResult {
  Mat frames;  // normalized
  int steps_run = 0;
};

// Text encoder + denoiser trained jointly.
class DiffusionModel {
 public:
  DiffusionModel(const text::TextEncoderConfig& text_config, const DiffusionConfig& config, text::Injection inject,
                 std::uint64_t seed);

  DenoiserCondition condition(const text::TextTokenSeq& tokens) const;

  // Uniform step per sample, condition dropped with probability `cond_drop`,
  // x0 regression. Returns the batch-mean loss.
  double train_step(const std::vector<DiffusionExample>& batch, nn::Adam& optimizer, nn::Rng& rng,
                    std::optional<double> cond_drop = std::nullopt);
  // Number of null-conditioned samples in the most recent train_step.
  int last_dropped() const { return last_dropped_; }

  Var loss(const DiffusionExample& example, int step, const Mat& noise, bool drop_condition) const;

  // Guided x0 estimate, clipped.
  Mat guided_x0(const Mat& x_t, int step, const DenoiserCondition& cond, double guidance,
                std::vector<nn::LayerAttention>* capture = nullptr) const;
  // One reverse step; noise is added except at step 1.
  Mat p_sample_step(const Mat& x_t, int step, const DenoiserCondition& cond, double guidance, nn::Rng& rng,
                    std::vector<nn::LayerAttention>* capture = nullptr) const;

  // Full chain from pure noise for `frames` frames. `trace` receives the
  // conditional-branch attention at options.capture_step.
  SampleResult sample(const text::TextTokenSeq& tokens, int frames, const SampleOptions& options,
                      std::vector<nn::LayerAttention>* trace = nullptr) const;

  nn::ParamList params() const;
  text::Injection injection() const { return inject_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const text::TextEncoder& encoder() const { return encoder_; }
  text::TextEncoder& encoder() { return encoder_; }
  const Denoiser& denoiser() const { return denoiser_; }
  Denoiser& denoiser() { return denoiser_; }

 private:
  text::TextEncoder encoder_;
  Denoiser denoiser_;
  text::Injection inject_;
  DiffusionSchedule schedule_;
  int last_dropped_ = 0;
};

}  // namespace casim::diffusion
