#pragma once

#include "casim/data/dataset.hpp"
#include "casim/nn/layers.hpp"
#include "casim/nn/optim.hpp"

#include <optional>
#include <vector>

namespace casim::vq {

using nn::Mat;
using nn::Var;

struct VqvaeConfig {
  int channels = data::kNumChannels;
  int hidden = 64;
  int latent = 64;     // code width c
  int codes = 64;      // K; id K is END
  int downsample = 4;  // l, a power of two
  double beta = 0.25;
  double ema_decay = 0.99;
  int dead_window = 256;
  double velocity_weight = 0.5;
};

struct QuantizeResult {
  int index = 0;
  nn::RowVec code;
  double codebook_loss = 0.0;    // ||sg(z) - e||^2
  double commitment_loss = 0.0;  // beta * ||z - sg(e)||^2
};

// K x c code matrix with EMA statistics. The tensors are held as
// non-trainable Vars so they travel in checkpoints with the weights.
class Codebook {
 public:
  Codebook(int codes, int width);

  int size() const { return static_cast<int>(codes_.rows()); }
  int width() const { return static_cast<int>(codes_.cols()); }
  const Mat& codes() const { return codes_.value(); }
  Mat& mutable_codes() { return codes_.mutable_value(); }
  const Mat& usage() const { return usage_.value(); }  // K x 1 lifetime assignment counts
  bool initialized() const { return initialized_.value()(0, 0) > 0.5; }

  // Nearest code by squared Euclidean distance; ties go to the lowest index.
  QuantizeResult quantize(const nn::RowVec& z, double beta) const;

  // Seeds every code from the given latents (cycled) and resets EMA state.
  void initialize_from(const Mat& latents);
  // One EMA update from this step's assignments. Codes unused for a whole
  // window of `dead_window` steps are re-seeded from random rows of `latents`.
  void ema_update(const Mat& latents, const std::vector<int>& assignment, double decay, int dead_window,
                  nn::Rng& rng);

  nn::ParamList state() const;

 private:
  Var codes_;
  Var ema_count_;  // K x 1
  Var ema_sum_;    // K x c
  Var usage_;      // K x 1
  Var window_usage_;  // K x 1, reset every dead_window steps
  Var window_steps_;  // 1 x 1
  Var initialized_;   // 1 x 1
};

struct MotionTokenSeq {
  std::vector<int> ids;   // code ids, optionally terminated by END (= K)
  int end_id = 64;
  int source_length = 0;  // frames before padding; 0 = unknown

  bool has_end() const { return !ids.empty() && ids.back() == end_id; }
};

struct EncodedMotion {
  Var latent;  // (T'/l) x c
  int source_length = 0;
  int pad = 0;  // frames appended by repeating the last frame
};

struct QuantizedLatents {
  std::vector<int> ids;
  Var quantized;   // straight-through output
  Var commitment;  // beta * mean ||z - sg(e)||^2
  double codebook_loss = 0.0;
};

struct VqvaeLosses {
  double reconstruction = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
};

class MotionVqvae {
 public:
  MotionVqvae(const VqvaeConfig& config, std::uint64_t seed);

  const VqvaeConfig& config() const { return config_; }
  int end_id() const { return config_.codes; }

  // Pads to a multiple of l by repeating the last frame. Rejects non-finite input.
  EncodedMotion encode(const Mat& frames) const;
  QuantizedLatents quantize(const Var& latent) const;
  Var decode(const Var& quantized) const;

  // Normalized frames -> token ids (no END).
  MotionTokenSeq tokenize(const Mat& frames) const;
  // Token ids -> normalized frames. END is stripped when final; ids must be
  // < K otherwise. Padding is removed when source_length is known.
  Mat decode_tokens(const MotionTokenSeq& tokens) const;

  // One optimizer step on a batch of equal-length normalized motions.
  VqvaeLosses train_step(const std::vector<Mat>& batch, nn::Adam& optimizer, nn::Rng& rng);

  nn::ParamList params() const;   // trainable weights
  nn::ParamList buffers() const;  // codebook state
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }

  // Layer access for tests.
  std::vector<nn::Linear> encoder_layers;
  std::vector<nn::Linear> decoder_layers;

 private:
  struct ConvSpec {
    int kernel;
    int stride;
    int pad;
    bool upsample_before;
  };
  Var run_stack(const Var& x, const std::vector<nn::Linear>& layers, const std::vector<ConvSpec>& specs) const;

  VqvaeConfig config_;
  std::vector<ConvSpec> encoder_specs_;
  std::vector<ConvSpec> decoder_specs_;
  Codebook codebook_;
};

// Reconstruction error per channel, averaged over channels, in normalized units.
double reconstruction_mse(const MotionVqvae& model, const std::vector<Mat>& motions);

}  // namespace casim::vq
